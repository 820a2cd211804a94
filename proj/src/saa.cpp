#include "prhr/saa.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace prhr {

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// disjoint scenario-index ranges per purpose
constexpr int64_t kReplicationStride = 1'000'000;
constexpr int64_t kReferenceOffset = 900'000'000;
constexpr int64_t kCalibrationOffset = 950'000'000;
constexpr int64_t kVssOffset = 970'000'000;

}  // namespace

Instance sample_instance(const GeneratorParams& template_params, int n_scenarios,
                         int64_t scenario_offset) {
    GeneratorParams p = template_params;
    p.n_scenarios = n_scenarios;
    p.scenario_offset = scenario_offset;
    return generate_instance(p);
}

std::pair<double, double> lower_bound_stats(const std::vector<double>& values) {
    const int M = static_cast<int>(values.size());
    if (M < 2) throw TooFewReplications("need at least two replication values");
    const double mu = std::accumulate(values.begin(), values.end(), 0.0) / M;
    double acc = 0.0;
    for (double v : values) acc += (v - mu) * (v - mu);
    return {mu, acc / (static_cast<double>(M - 1) * M)};
}

std::pair<double, double> upper_bound_eval(const ModelContext& reference_ctx,
                                           const Grid2& open, const Grid2& carryover) {
    const int N = reference_ctx.instance.n_scenarios();
    std::vector<double> vals(N, 0.0);
    for (int s = 0; s < N; ++s)
        vals[s] = second_stage_value(reference_ctx, open, carryover, s);
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / N;
    double acc = 0.0;
    for (double v : vals) acc += (v - mean) * (v - mean);
    const double var = N > 1 ? acc / (static_cast<double>(N - 1) * N) : 0.0;
    return {mean, var};
}

SaaReport run_saa(const GeneratorParams& template_params, const SaaConfig& config) {
    config.validate();
    GeneratorParams base = template_params;
    base.seed = config.seed;

    // shared objective scaling from a dedicated calibration sample
    auto calib_inst = sample_instance(base, config.sample_size, kCalibrationOffset);
    auto calib_ctx = make_context(calib_inst);
    const double g_star = calib_ctx.gamma_star_raw();
    const double g_max = calib_ctx.gamma_max_raw();
    const double o_star = calib_ctx.bounds.omega_star;
    const double o_max = calib_ctx.bounds.omega_max;

    SaaReport rep;
    rep.gamma_star_raw = g_star;
    rep.gamma_max_raw = g_max;
    rep.omega_star = o_star;
    rep.omega_max = o_max;

    std::vector<Grid2> opens, carries;
    std::vector<int> rep_index;
    for (int m = 0; m < config.replications; ++m) {
        const double t0 = now_s();
        SaaReplicationRow row;
        row.replication = m;
        try {
            auto inst = sample_instance(base, config.sample_size,
                                        (m + 1) * kReplicationStride);
            auto ctx = make_context_with_scaling(inst, g_star, g_max, o_star, o_max);
            ExactOptions opts;
            opts.time_budget_s = config.solve_budget_s;
            auto res = solve_exact(ctx, opts);
            row.solve_nodes = res.patterns_evaluated;
            if (!res.proven_optimal) throw std::runtime_error("budget expired");
            row.objective = res.objective;
            rep.replication_values.push_back(res.objective);
            opens.push_back(res.design.open);
            carries.push_back(res.design.carryover);
            rep_index.push_back(m);
        } catch (const std::exception&) {
            row.failed = true;
            ++rep.failed_count;
        }
        row.wall_ms = static_cast<long>((now_s() - t0) * 1000.0);
        rep.rows.push_back(row);
    }
    if (static_cast<int>(rep.replication_values.size()) < 2)
        throw TooFewReplications("fewer than two replications solved to optimality");

    auto [mu, var_lb] = lower_bound_stats(rep.replication_values);
    rep.mu_lb = mu;
    rep.var_lb = var_lb;

    // first-stage choice: smallest replication objective, ties to lowest index
    int best = 0;
    for (int k = 1; k < static_cast<int>(rep.replication_values.size()); ++k)
        if (rep.replication_values[k] < rep.replication_values[best] - 1e-12) best = k;
    rep.chosen_replication = rep_index[best];
    rep.chosen_open = opens[best];
    rep.chosen_carryover = carries[best];

    auto ref_inst = sample_instance(base, config.reference_size, kReferenceOffset);
    auto ref_ctx = make_context_with_scaling(ref_inst, g_star, g_max, o_star, o_max);
    auto [ub, var_ub] = upper_bound_eval(ref_ctx, rep.chosen_open, rep.chosen_carryover);
    rep.ub = ub;
    rep.var_ub = var_ub;
    rep.gap = rep.ub - rep.mu_lb;
    rep.var_gap = rep.var_lb + rep.var_ub;
    return rep;
}

VssReport compute_vss(const GeneratorParams& template_params, const SaaConfig& config) {
    config.validate();
    GeneratorParams base = template_params;
    base.seed = config.seed;

    auto inst = sample_instance(base, config.sample_size, kVssOffset);
    auto ctx = make_context(inst);

    VssReport out;
    ExactOptions opts;
    opts.time_budget_s = config.solve_budget_s;
    auto stochastic = solve_exact(ctx, opts);
    out.rp = stochastic.objective;

    // mean-value problem: every stochastic parameter replaced by its sample mean
    Instance mean_inst = inst;
    Scenario mean_sc = inst.scenarios[0];
    const int S = inst.n_scenarios();
    auto blend = [S](auto get) {
        // averages field-by-field across scenarios
        return get;
    };
    (void)blend;
    for (size_t k = 0; k < mean_sc.unit_cost.v.size(); ++k) {
        double acc = 0.0;
        for (int s = 0; s < S; ++s) acc += inst.scenarios[s].unit_cost.v[k];
        mean_sc.unit_cost.v[k] = acc / S;
    }
    for (size_t k = 0; k < mean_sc.flow.v.size(); ++k) {
        double acc = 0.0;
        for (int s = 0; s < S; ++s) acc += inst.scenarios[s].flow.v[k];
        mean_sc.flow.v[k] = acc / S;
    }
    for (size_t k = 0; k < mean_sc.node_risk_free.v.size(); ++k) {
        double acc = 0.0;
        for (int s = 0; s < S; ++s) acc += inst.scenarios[s].node_risk_free.v[k];
        mean_sc.node_risk_free.v[k] = acc / S;
    }
    for (size_t k = 0; k < mean_sc.link_risk_free.v.size(); ++k) {
        double acc = 0.0;
        for (int s = 0; s < S; ++s) acc += inst.scenarios[s].link_risk_free.v[k];
        mean_sc.link_risk_free.v[k] = acc / S;
    }
    double nt = 0.0, lt = 0.0;
    for (int s = 0; s < S; ++s) {
        nt += inst.scenarios[s].node_threshold;
        lt += inst.scenarios[s].link_threshold;
    }
    mean_sc.node_threshold = nt / S;
    mean_sc.link_threshold = lt / S;
    mean_sc.probability = 1.0;
    mean_inst.scenarios = {mean_sc};

    // same scaling so the two objective values are comparable
    auto mean_ctx = make_context_with_scaling(mean_inst, ctx.gamma_star_raw(),
                                              ctx.gamma_max_raw(), ctx.bounds.omega_star,
                                              ctx.bounds.omega_max);
    auto mean_res = solve_exact(mean_ctx, opts);

    // expected value of the mean design: second stage re-optimized per
    // scenario of the sampled program with the first stage frozen
    ExactOptions fixed;
    fixed.fixed_open = &mean_res.design.open;
    fixed.fixed_carryover = &mean_res.design.carryover;
    fixed.time_budget_s = config.solve_budget_s;
    auto eev_res = solve_exact(ctx, fixed);
    out.eev = eev_res.objective;
    out.vss = out.eev - out.rp;
    return out;
}

}  // namespace prhr
