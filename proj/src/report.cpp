#include "prhr/report.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace prhr {

using nlohmann::json;

const char* solve_strategy_name(SolveStrategy s) {
    switch (s) {
        case SolveStrategy::Exact: return "exact";
        case SolveStrategy::ClassicLr: return "classic-lr";
        case SolveStrategy::Sbd: return "sbd";
        case SolveStrategy::Mbd: return "mbd";
        case SolveStrategy::Pbd: return "pbd";
        case SolveStrategy::Mpbd: return "mpbd";
    }
    return "?";
}

SolveStrategy parse_strategy(const std::string& name) {
    for (SolveStrategy s : {SolveStrategy::Exact, SolveStrategy::ClassicLr, SolveStrategy::Sbd,
                            SolveStrategy::Mbd, SolveStrategy::Pbd, SolveStrategy::Mpbd})
        if (name == solve_strategy_name(s)) return s;
    throw std::invalid_argument("unknown strategy: " + name);
}

void RunConfig::validate() const {
    if (eps_lr <= 0 || eps_bd <= 0) throw std::invalid_argument("tolerances must be positive");
    if (iter1_max < 1 || iter2_max < 1)
        throw std::invalid_argument("iteration caps must be positive");
    if (failure_prob < 0 || failure_prob > 1)
        throw std::invalid_argument("failure probability must lie in [0,1]");
}

double report_gap(double lb, double ub) {
    if (!std::isfinite(lb) || !std::isfinite(ub)) return kInf;
    return (ub - lb) / std::max(1.0, std::abs(ub));
}

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

CutStrategy to_cut_strategy(SolveStrategy s) {
    switch (s) {
        case SolveStrategy::Sbd: return CutStrategy::SBD;
        case SolveStrategy::Mbd: return CutStrategy::MBD;
        case SolveStrategy::Pbd: return CutStrategy::PBD;
        default: return CutStrategy::MPBD;
    }
}

}  // namespace

SolveReport run_solve(const ModelContext& ctx, const RunConfig& config) {
    SolveReport rep;
    rep.strategy = config.strategy;
    const double t0 = now_s();

    if (config.strategy == SolveStrategy::Exact) {
        // generic engine where the binary set stays enumerable, the pattern
        // solver beyond that
        const int HT2 = 2 * ctx.instance.n_nodes * ctx.instance.n_periods;
        const long lp_cols = 3L * ctx.instance.n_nodes * ctx.instance.n_nodes *
                             ctx.instance.n_periods * ctx.instance.n_scenarios();
        if (HT2 <= 24 && lp_cols <= 3000) {
            auto built = build_linearized_milp(ctx);
            MipLimits limits;
            limits.time_budget_s = config.time_max_s;
            auto sol = solve_mip(built.mip, limits);
            rep.lb = sol.best_bound;
            rep.ub = sol.objective_value;
            rep.objective = sol.objective_value;
            if (sol.has_incumbent()) {
                rep.design = design_from_milp_point(ctx, built.layout, sol.incumbent);
                rep.has_design = true;
            }
            rep.lp_or_master_nodes = sol.nodes_explored;
        } else {
            ExactOptions opts;
            opts.time_budget_s = config.time_max_s;
            auto res = solve_exact(ctx, opts);
            rep.lb = res.proven_optimal ? res.objective : -kInf;
            rep.ub = res.objective;
            rep.objective = res.objective;
            rep.design = res.design;
            rep.has_design = true;
            rep.lp_or_master_nodes = res.patterns_evaluated;
        }
    } else {
        LrConfig lr;
        lr.eps_lr = config.eps_lr;
        lr.sigma0 = config.sigma0;
        lr.iter1_max = config.iter1_max;
        lr.time_max_s = config.time_max_s;
        lr.inner.eps_bd = config.eps_bd;
        lr.inner.iter2_max = config.iter2_max;
        lr.inner.lambda = config.lambda;
        lr.inner.time_budget_s = std::max(2.0, config.time_max_s / config.iter1_max);
        lr.ub_time_budget_s = std::max(1.0, config.time_max_s / (4.0 * config.iter1_max));
        if (config.strategy == SolveStrategy::ClassicLr) {
            lr.inner_direct_mip = true;
            lr.direct_limits.time_budget_s = std::max(2.0, config.time_max_s / config.iter1_max);
        } else {
            lr.inner.strategy = to_cut_strategy(config.strategy);
        }
        auto lrrep = run_lagrangian(ctx, lr);
        rep.lb = lrrep.lb;
        rep.ub = lrrep.ub;
        rep.objective = lrrep.ub;
        rep.design = lrrep.best_design;
        rep.has_design = lrrep.has_design;
        rep.outer_iterations = lrrep.iterations;
        rep.inner_iterations = lrrep.inner_iterations_total;
        rep.lp_or_master_nodes = lrrep.master_nodes;
        rep.outer_trace = lrrep.trace;
        rep.inner_trace = lrrep.first_inner_trace;
    }
    rep.gap = report_gap(rep.lb, rep.ub);
    rep.wall_ms = static_cast<long>((now_s() - t0) * 1000.0);
    return rep;
}

// ---- CSV / JSON emission ---------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    return os;
}

}  // namespace

void write_outer_trace_csv(const std::string& path, const std::vector<LrTraceRow>& rows) {
    auto os = open_out(path);
    os << "it_lr,lb_bd,lb_lr,ub_lr,sigma,theta,norm_sq,wall_ms\n";
    os.precision(12);
    for (const auto& r : rows)
        os << r.it_lr << ',' << r.lb_bd << ',' << r.lb_lr << ',' << r.ub_lr << ',' << r.sigma
           << ',' << r.theta << ',' << r.norm_sq << ',' << r.wall_ms << '\n';
}

void write_inner_trace_csv(const std::string& path, const std::vector<BdTraceRow>& rows,
                           const std::string& strategy) {
    auto os = open_out(path);
    os << "it_bd,lb_bd,ub_bd,gap,cuts_added,cuts_total,strategy\n";
    os.precision(12);
    for (const auto& r : rows)
        os << r.it_bd << ',' << r.lb << ',' << r.ub << ',' << r.gap << ',' << r.cuts_added
           << ',' << r.cuts_total << ',' << strategy << '\n';
}

void write_saa_replications_csv(const std::string& path,
                                const std::vector<SaaReplicationRow>& rows) {
    auto os = open_out(path);
    os << "replication,objective,solve_nodes,wall_ms\n";
    os.precision(12);
    for (const auto& r : rows) {
        os << r.replication << ',';
        if (r.failed)
            os << "failed";
        else
            os << r.objective;
        os << ',' << r.solve_nodes << ',' << r.wall_ms << '\n';
    }
}

void write_failure_csv(const std::string& path, const FailureSimResult& result) {
    auto os = open_out(path);
    os << "scenario,unserved\n";
    os.precision(12);
    for (size_t k = 0; k < result.per_scenario.size(); ++k)
        os << k << ',' << result.per_scenario[k] << '\n';
}

uint64_t config_digest(const RunConfig& c) {
    json doc;
    doc["command"] = c.command;
    doc["instance_path"] = c.instance_path;
    doc["nodes"] = c.gen.n_nodes;
    doc["periods"] = c.gen.n_periods;
    doc["scenarios"] = c.gen.n_scenarios;
    doc["strategy"] = solve_strategy_name(c.strategy);
    doc["eps_lr"] = c.eps_lr;
    doc["eps_bd"] = c.eps_bd;
    doc["sigma0"] = c.sigma0;
    doc["lambda"] = c.lambda;
    doc["iter1_max"] = c.iter1_max;
    doc["iter2_max"] = c.iter2_max;
    doc["time_max"] = c.time_max_s;
    doc["seed"] = c.seed;
    doc["samples"] = c.samples;
    doc["replications"] = c.replications;
    doc["reference"] = c.reference;
    doc["failure_prob"] = c.failure_prob;
    doc["tau"] = c.gen.tau;
    doc["theta1"] = c.gen.theta1;
    doc["theta2"] = c.gen.theta2;
    const std::string text = doc.dump();
    uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : text) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ull;
    }
    return h;
}

void write_manifest(const std::string& path, const RunConfig& c) {
    json doc;
    doc["schema"] = "prhr-manifest/v1";
    doc["command"] = c.command;
    doc["seed"] = c.seed;
    doc["digest"] = config_digest(c);
    doc["version"] = "1.0.0";
    json cfg;
    cfg["instance_path"] = c.instance_path;
    cfg["nodes"] = c.gen.n_nodes;
    cfg["periods"] = c.gen.n_periods;
    cfg["scenarios"] = c.gen.n_scenarios;
    cfg["tau"] = c.gen.tau;
    cfg["theta1"] = c.gen.theta1;
    cfg["theta2"] = c.gen.theta2;
    cfg["strategy"] = solve_strategy_name(c.strategy);
    cfg["eps_lr"] = c.eps_lr;
    cfg["eps_bd"] = c.eps_bd;
    cfg["sigma0"] = c.sigma0;
    cfg["lambda"] = c.lambda;
    cfg["iter1_max"] = c.iter1_max;
    cfg["iter2_max"] = c.iter2_max;
    cfg["time_max"] = c.time_max_s;
    cfg["samples"] = c.samples;
    cfg["replications"] = c.replications;
    cfg["reference"] = c.reference;
    cfg["failure_prob"] = c.failure_prob;
    cfg["out_dir"] = c.out_dir;
    doc["config"] = std::move(cfg);
    auto os = open_out(path);
    os << doc.dump(1) << "\n";
}

namespace {

// minimal schema checker: {"required": {"dotted.path": "number|string|array|object|integer"}}
std::string check_schema(const json& doc, const json& schema) {
    if (!schema.contains("required")) return "schema missing 'required'";
    for (auto& [path, type] : schema["required"].items()) {
        const json* cur = &doc;
        std::string part;
        std::istringstream ss(path);
        bool ok = true;
        while (std::getline(ss, part, '.')) {
            if (!cur->is_object() || !cur->contains(part)) {
                ok = false;
                break;
            }
            cur = &(*cur)[part];
        }
        if (!ok) return "missing field: " + path;
        const std::string want = type.get<std::string>();
        const bool match = (want == "number" && cur->is_number()) ||
                           (want == "integer" && cur->is_number_integer()) ||
                           (want == "string" && cur->is_string()) ||
                           (want == "array" && cur->is_array()) ||
                           (want == "object" && cur->is_object()) ||
                           (want == "boolean" && cur->is_boolean());
        if (!match) return "field " + path + " is not a " + want;
    }
    return "";
}

}  // namespace

std::string validate_summary_against_schema(const std::string& summary_json,
                                            const std::string& schema_json) {
    try {
        const json doc = json::parse(summary_json);
        const json schema = json::parse(schema_json);
        return check_schema(doc, schema);
    } catch (const json::exception& e) {
        return std::string("parse error: ") + e.what();
    }
}

void write_summary(const std::string& path, const std::string& json_text) {
    // round-trip through the parser so emitted files are always valid JSON
    const json doc = json::parse(json_text);
    auto os = open_out(path);
    os << doc.dump(1) << "\n";
    if (!os) throw std::runtime_error("write failed: " + path);
}

int worker_count() {
    if (const char* env = std::getenv("PRHR_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(int n, const std::function<void(int)>& fn) {
    const int workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace prhr
