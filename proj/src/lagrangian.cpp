#include "prhr/lagrangian.hpp"

#include <chrono>
#include <cmath>

namespace prhr {

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

BuiltMilp build_lrp(const ModelContext& ctx, const Multipliers& d) {
    MilpOptions opts;
    opts.include_assignment = false;
    opts.include_risk_rows = false;
    opts.gamma_upper = ctx.gamma_cap_raw;
    BuiltMilp built = build_linearized_milp(ctx, opts);

    const Instance& inst = ctx.instance;
    const MilpLayout& L = built.layout;
    LinearProgram& lp = built.mip.base;
    const double inv_ss = 1.0 / (ctx.scale.sigma1 * ctx.scale.sigma2);
    for (int s = 0; s < inst.n_scenarios(); ++s) {
        const Scenario& sc = inst.scenarios[s];
        const double p = sc.probability;
        const double d1r = d.d1[s] * inv_ss;
        lp.objective_offset +=
            d1r * (sc.node_threshold * sc.link_threshold - ctx.best.psi_raw[s]);
        lp.objective[L.gamma_id] -= d1r;
        for (int t = 0; t < inst.n_periods; ++t) {
            lp.objective_offset += d.d2(s, t);
            for (int i = 0; i < inst.n_nodes; ++i) {
                const double w = d1r * sc.link_threshold * p * sc.node_risk_free(i, t);
                lp.objective[L.z(i, t)] -= w;
                lp.objective[L.v(i, t)] += w;
                for (int j = 0; j < inst.n_nodes; ++j) {
                    lp.objective[L.x(s, i, j, t)] -=
                        d1r * sc.node_threshold * p * sc.link_risk_free(i, j, t) +
                        d.d2(s, t);
                    const double cross =
                        d1r * p * sc.link_risk_free(i, j, t) * sc.node_risk_free(i, t);
                    lp.objective[L.l(s, i, j, t)] += cross;
                    lp.objective[L.q(s, i, j, t)] -= cross;
                }
            }
        }
    }
    return built;
}

LrpSolveResult solve_lrp_lower_bound(const ModelContext& ctx, const Multipliers& d,
                                     const LrConfig& config) {
    LrpSolveResult out;
    const Instance& inst = ctx.instance;
    const int H = inst.n_nodes, T = inst.n_periods, S = inst.n_scenarios();

    if (!config.inner_direct_mip) {
        BdConfig bd = config.inner;
        bd.strategy = config.inner.strategy;
        BdReport rep = run_benders(ctx, d, bd);
        out.lb = rep.lb;
        out.point = rep.final_point;
        out.x = rep.final_x;
        out.gamma_raw = rep.gamma_hat_raw;
        out.inner_iterations = rep.iterations;
        out.master_nodes = rep.master_nodes;
        out.inner_converged = rep.converged;
        out.inner_trace = rep.trace;
        return out;
    }

    // classical variant: the relaxation handed to the generic engine whole
    BuiltMilp built = build_lrp(ctx, d);
    const MilpLayout& L = built.layout;
    out.point.Z = Grid2(H, T, 0.0);
    out.point.V = Grid2(H, T, 0.0);
    out.point.L.assign(S, Grid3(H, H, T, 0.0));
    out.point.Q.assign(S, Grid3(H, H, T, 0.0));
    out.x.assign(static_cast<size_t>(S) * T, Grid2(H, H, 0.0));
    try {
        MipSolution sol = solve_mip(built.mip, config.direct_limits);
        out.lb = sol.best_bound;
        out.master_nodes = sol.nodes_explored;
        if (sol.has_incumbent()) {
            for (int i = 0; i < H; ++i)
                for (int t = 0; t < T; ++t) {
                    out.point.Z(i, t) = std::round(sol.incumbent[L.z(i, t)]);
                    out.point.V(i, t) = std::round(sol.incumbent[L.v(i, t)]);
                }
            for (int s = 0; s < S; ++s)
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < H; ++j)
                        for (int t = 0; t < T; ++t) {
                            out.point.L[s](i, j, t) = sol.incumbent[L.l(s, i, j, t)];
                            out.point.Q[s](i, j, t) = sol.incumbent[L.q(s, i, j, t)];
                            out.x[s * T + t](i, j) = sol.incumbent[L.x(s, i, j, t)];
                        }
            out.gamma_raw = sol.incumbent[L.gamma_id];
        }
    } catch (const NoIncumbentFound&) {
        // budget gone before any integral point: fall back to the relaxation
        LinearProgram relax = built.mip.base;
        LpSolution sol = solve_lp(relax);
        out.lb = sol.status == LpStatus::Optimal ? sol.objective_value : -kInf;
    }
    return out;
}

UpperBoundResult upper_bound_by_fixing(const ModelContext& ctx, const Grid2& carryover,
                                       double time_budget_s) {
    ExactOptions opts;
    opts.fixed_carryover = &carryover;
    opts.time_budget_s = time_budget_s;
    UpperBoundResult out;
    try {
        auto res = solve_exact(ctx, opts);
        out.ub = res.objective;
        out.design = res.design;
        out.restricted_optimal = res.proven_optimal;
        return out;
    } catch (const InfeasibleScenario&) {
        // frozen carryover admits no consistent opening; retry fully released
        Grid2 zero(ctx.instance.n_nodes, ctx.instance.n_periods, 0.0);
        ExactOptions retry;
        retry.fixed_carryover = &zero;
        retry.time_budget_s = time_budget_s;
        try {
            auto res = solve_exact(ctx, retry);
            out.ub = res.objective;
            out.design = res.design;
            out.restricted_optimal = false;
            return out;
        } catch (const InfeasibleScenario&) {
            throw RestrictedInfeasible("no feasible design under frozen carryover");
        }
    }
}

StepResult subgradient_step(const ModelContext& ctx, const SubgradientState& state,
                            const LrpSolveResult& inner, double ub_lr, const Multipliers& d,
                            const LrConfig& config) {
    const Instance& inst = ctx.instance;
    const int H = inst.n_nodes, T = inst.n_periods, S = inst.n_scenarios();

    StepResult res;
    res.multipliers = d;
    res.state = state;

    std::vector<double> g1(S, 0.0);
    Grid2 g2(S, T, 0.0);
    double norm_sq = 0.0;
    for (int s = 0; s < S; ++s) {
        const Scenario& sc = inst.scenarios[s];
        const double p = sc.probability;
        double val = sc.node_threshold * sc.link_threshold - ctx.best.psi_raw[s];
        for (int t = 0; t < T; ++t) {
            double xsum = 0.0;
            for (int i = 0; i < H; ++i) {
                val -= sc.link_threshold * p * sc.node_risk_free(i, t) *
                       (inner.point.Z(i, t) - inner.point.V(i, t));
                for (int j = 0; j < H; ++j) {
                    const double x = inner.x[s * T + t](i, j);
                    val -= sc.node_threshold * p * sc.link_risk_free(i, j, t) * x;
                    val += p * sc.link_risk_free(i, j, t) * sc.node_risk_free(i, t) *
                           (inner.point.L[s](i, j, t) - inner.point.Q[s](i, j, t));
                    xsum += x;
                }
            }
            g2(s, t) = 1.0 - xsum;
            norm_sq += g2(s, t) * g2(s, t);
        }
        g1[s] = (val - inner.gamma_raw) / (ctx.scale.sigma1 * ctx.scale.sigma2);
        norm_sq += g1[s] * g1[s];
    }
    res.norm_sq = norm_sq;
    if (norm_sq < 1e-12) {
        res.outcome = StepOutcome::ZeroSubgradient;
        return res;
    }
    const double theta = state.sigma * (ub_lr - inner.lb) / norm_sq;
    res.state.theta = theta;
    for (int s = 0; s < S; ++s) {
        res.multipliers.d1[s] = std::max(0.0, d.d1[s] + theta * g1[s]);
        for (int t = 0; t < T; ++t) {
            const double nd = d.d2(s, t) + theta * g2(s, t);
            res.multipliers.d2(s, t) = config.free_d2 ? nd : std::max(0.0, nd);
        }
    }
    return res;
}

LrReport run_lagrangian(const ModelContext& ctx, const LrConfig& config) {
    LrReport rep;
    Multipliers d = zero_multipliers(ctx);
    SubgradientState state;
    state.sigma = config.sigma0;
    const double t0 = now_s();

    for (int it = 1; it <= config.iter1_max; ++it) {
        state.iteration = it;
        LrpSolveResult inner = solve_lrp_lower_bound(ctx, d, config);
        rep.inner_iterations_total += inner.inner_iterations;
        rep.master_nodes += inner.master_nodes;
        if (it == 1) rep.first_inner_trace = inner.inner_trace;

        const bool improved = inner.lb > rep.lb + 1e-12;
        if (improved) rep.lb = inner.lb;
        apply_noipr_rule(state, improved);

        auto ub = upper_bound_by_fixing(ctx, inner.point.V, config.ub_time_budget_s);
        if (ub.ub < rep.ub) {
            rep.ub = ub.ub;
            rep.best_design = ub.design;
            rep.has_design = true;
        }

        StepResult step = subgradient_step(ctx, state, inner, rep.ub, d, config);
        rep.trace.push_back({it, inner.lb, rep.lb, rep.ub, state.sigma, step.state.theta,
                             step.norm_sq,
                             static_cast<long>((now_s() - t0) * 1000.0)});
        rep.iterations = it;
        if (step.outcome == StepOutcome::ZeroSubgradient) {
            // every relaxed constraint holds at the inner point: its value is
            // attainable, so the bound interval collapses up to tolerance
            rep.zero_subgradient = true;
            break;
        }
        d = std::move(step.multipliers);
        state = step.state;

        if (state.sigma < config.eps_lr) break;
        if (now_s() - t0 > config.time_max_s) break;
    }
    return rep;
}

}  // namespace prhr
