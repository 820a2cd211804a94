#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prhr/lagrangian.hpp"
#include "prhr/rng.hpp"

using namespace prhr;

namespace {

GeneratorParams tiny_params(uint64_t seed, int H, int T, int S) {
    GeneratorParams p;
    p.seed = seed;
    p.n_nodes = H;
    p.n_periods = T;
    p.n_scenarios = S;
    return p;
}

GeneratorParams zero_risk_params(uint64_t seed, int H, int T, int S) {
    auto p = tiny_params(seed, H, T, S);
    p.score_min = p.score_max = 0.0;
    p.threshold_lo_factor = p.threshold_hi_factor = 0.0;
    return p;
}

Multipliers random_multipliers(const ModelContext& ctx, uint64_t seed) {
    CounterRng rng(seed);
    Multipliers d = zero_multipliers(ctx);
    const double ss = ctx.scale.sigma1 * ctx.scale.sigma2;
    for (size_t s = 0; s < d.d1.size(); ++s) d.d1[s] = ss * rng.uniform(0.0, 2e-4, "d1", s);
    for (int s = 0; s < d.d2.n1; ++s)
        for (int t = 0; t < d.d2.n2; ++t) d.d2(s, t) = rng.uniform(0.0, 0.05, "d2", s, t);
    return d;
}

// evaluate a MILP objective at a primal point
double milp_objective_at(const LinearProgram& lp, const std::vector<double>& x) {
    double acc = lp.objective_offset;
    for (int j = 0; j < lp.num_vars(); ++j) acc += lp.objective[j] * x[j];
    return acc;
}

}  // namespace

TEST_CASE("zero multipliers: relaxation objective equals the weighted objective") {
    auto ctx = make_context(generate_instance(tiny_params(1, 3, 2, 2)));
    auto lrp = build_lrp(ctx, zero_multipliers(ctx));
    auto full = build_linearized_milp(ctx);
    // at the full model's optimal point the two objectives agree
    auto sol = enumerate_binary_optimum(full.mip);
    REQUIRE(sol.status == MipStatus::Optimal);
    CHECK(milp_objective_at(lrp.mip.base, sol.incumbent) ==
          doctest::Approx(milp_objective_at(full.mip.base, sol.incumbent)).epsilon(1e-9));
}

TEST_CASE("perturbing an assignment multiplier shifts the objective linearly") {
    auto ctx = make_context(generate_instance(tiny_params(1, 3, 1, 2)));
    Multipliers d = random_multipliers(ctx, 3);
    auto base = build_lrp(ctx, d);
    auto full = build_linearized_milp(ctx);
    auto sol = enumerate_binary_optimum(full.mip);
    REQUIRE(sol.status == MipStatus::Optimal);

    const double delta = 0.37;
    Multipliers d2 = d;
    d2.d2(1, 0) += delta;
    auto shifted = build_lrp(ctx, d2);
    double xsum = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) xsum += sol.incumbent[base.layout.x(1, i, j, 0)];
    const double before = milp_objective_at(base.mip.base, sol.incumbent);
    const double after = milp_objective_at(shifted.mip.base, sol.incumbent);
    CHECK(after - before == doctest::Approx(delta * (1.0 - xsum)).epsilon(1e-9));
}

TEST_CASE("weak duality over random multipliers") {
    auto ctx = make_context(generate_instance(tiny_params(1, 3, 1, 2)));
    auto exact = solve_exact(ctx);
    for (int k = 0; k < 20; ++k) {
        Multipliers d = random_multipliers(ctx, 100 + k);
        auto lrp = build_lrp(ctx, d);
        auto opt = enumerate_binary_optimum(lrp.mip);
        REQUIRE(opt.status == MipStatus::Optimal);
        INFO("multiplier draw ", k);
        CHECK(opt.objective_value <= exact.objective + 1e-6);
    }
}

TEST_CASE("step size arithmetic") {
    // zero-risk instance with S=2, T=2: closed-network inner point leaves
    // every assignment row violated by exactly one, so ||g||^2 = 4
    auto ctx = make_context(generate_instance(zero_risk_params(4, 3, 2, 2)));
    LrpSolveResult inner;
    inner.lb = 8.0;
    inner.gamma_raw = 0.0;
    inner.point.Z = Grid2(3, 2, 0.0);
    inner.point.V = Grid2(3, 2, 0.0);
    inner.point.L.assign(2, Grid3(3, 3, 2, 0.0));
    inner.point.Q.assign(2, Grid3(3, 3, 2, 0.0));
    inner.x.assign(4, Grid2(3, 3, 0.0));
    SubgradientState state;
    state.sigma = 2.0;
    LrConfig config;
    auto step = subgradient_step(ctx, state, inner, /*ub=*/10.0, zero_multipliers(ctx), config);
    CHECK(step.outcome == StepOutcome::Ok);
    CHECK(step.norm_sq == doctest::Approx(4.0));
    CHECK(step.state.theta == doctest::Approx(1.0));
    // d2 moved up by theta * 1 on every violated row
    for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t) CHECK(step.multipliers.d2(s, t) == doctest::Approx(1.0));
}

TEST_CASE("zero subgradient when the relaxed constraints hold exactly") {
    auto ctx = make_context(generate_instance(zero_risk_params(4, 3, 1, 1)));
    LrpSolveResult inner;
    inner.lb = 1.0;
    inner.gamma_raw = 0.0;
    inner.point.Z = Grid2(3, 1, 0.0);
    inner.point.Z(0, 0) = 1.0;
    inner.point.V = Grid2(3, 1, 0.0);
    inner.point.L.assign(1, Grid3(3, 3, 1, 0.0));
    inner.point.Q.assign(1, Grid3(3, 3, 1, 0.0));
    inner.x.assign(1, Grid2(3, 3, 0.0));
    inner.x[0](0, 0) = 1.0;  // assignment satisfied exactly
    SubgradientState state;
    LrConfig config;
    auto step = subgradient_step(ctx, state, inner, 2.0, zero_multipliers(ctx), config);
    CHECK(step.outcome == StepOutcome::ZeroSubgradient);
}

TEST_CASE("step parameter halves after two non-improving iterations") {
    SubgradientState st;
    st.sigma = 2.0;
    apply_noipr_rule(st, true);
    CHECK(st.sigma == 2.0);
    CHECK(st.noipr == 0);
    apply_noipr_rule(st, false);
    CHECK(st.sigma == 2.0);  // first miss only counts
    CHECK(st.noipr == 1);
    apply_noipr_rule(st, false);
    CHECK(st.sigma == 1.0);  // second miss halves
    CHECK(st.noipr == 0);
}

TEST_CASE("upper bound by fixing") {
    auto ctx = make_context(generate_instance(tiny_params(1, 3, 2, 2)));
    auto exact = solve_exact(ctx);
    SUBCASE("carryover frozen at the optimum reproduces the optimum") {
        auto ub = upper_bound_by_fixing(ctx, exact.design.carryover, 30.0);
        CHECK(ub.restricted_optimal);
        CHECK(ub.ub == doctest::Approx(exact.objective).epsilon(1e-9));
    }
    SUBCASE("any frozen carryover stays above the optimum") {
        Grid2 v(3, 2, 0.0);
        auto ub = upper_bound_by_fixing(ctx, v, 30.0);
        CHECK(ub.ub >= exact.objective - 1e-9);
    }
}

TEST_CASE("single-period instances make the carryover vacuous") {
    auto ctx = make_context(generate_instance(tiny_params(7, 3, 1, 2)));
    auto exact = solve_exact(ctx);
    Grid2 zero(3, 1, 0.0);
    auto ub = upper_bound_by_fixing(ctx, zero, 30.0);
    CHECK(ub.ub == doctest::Approx(exact.objective).epsilon(1e-9));
}

TEST_CASE("outer loop sandwich on tiny instances (both inner variants)") {
    for (bool direct : {false, true}) {
        for (uint64_t seed : {1u, 5u}) {
            auto ctx = make_context(generate_instance(tiny_params(seed, 3, 1, 2)));
            auto exact = solve_exact(ctx);
            LrConfig config;
            config.iter1_max = 8;
            config.inner.iter2_max = 15;
            config.inner_direct_mip = direct;
            auto rep = run_lagrangian(ctx, config);
            INFO("direct=", direct, " seed=", seed, " lb=", rep.lb, " ub=", rep.ub,
                 " exact=", exact.objective);
            CHECK(rep.lb <= exact.objective + 1e-6);
            CHECK(rep.ub >= exact.objective - 1e-6);
            // bookkeeping is monotone along the trace
            for (size_t k = 1; k < rep.trace.size(); ++k) {
                CHECK(rep.trace[k].lb_lr >= rep.trace[k - 1].lb_lr - 1e-9);
                CHECK(rep.trace[k].ub_lr <= rep.trace[k - 1].ub_lr + 1e-9);
                CHECK(rep.trace[k].sigma <= rep.trace[k - 1].sigma + 1e-12);
            }
        }
    }
}

TEST_CASE("multiplier iterations keep a bounded gap on the seed-1 instance") {
    auto ctx = make_context(generate_instance(tiny_params(1, 3, 1, 2)));
    auto exact = solve_exact(ctx);
    LrConfig config;
    config.iter1_max = 30;
    auto rep = run_lagrangian(ctx, config);
    CHECK(rep.lb <= exact.objective + 1e-6);
    const double gap = (exact.objective - rep.lb) / std::max(1.0, std::abs(exact.objective));
    INFO("relative gap to the exact optimum: ", gap);
    CHECK(gap <= 0.15);
}
