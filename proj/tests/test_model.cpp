#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "prhr/instance.hpp"
#include "prhr/model.hpp"
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

Instance zero_score_instance(int H, int T) {
    GeneratorParams p = tiny_params(3, H, T, 1);
    p.score_min = p.score_max = 0.0;
    p.threshold_lo_factor = p.threshold_hi_factor = 0.0;
    return generate_instance(p);
}

}  // namespace

TEST_CASE("normal cdf: midpoint and tails") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(normal_cdf(1e6) == doctest::Approx(1.0));
    CHECK(normal_cdf(-1e6) == doctest::Approx(0.0));
}

TEST_CASE("normal cdf matches the erf-based reference on a dense grid") {
    double worst = 0.0;
    for (int k = 0; k <= 10000; ++k) {
        const double x = -8.0 + 16.0 * k / 10000.0;
        const double ref = 0.5 * std::erfc(-x / std::sqrt(2.0));
        worst = std::max(worst, std::abs(normal_cdf(x) - ref));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("chance probability agrees with a Monte-Carlo estimate") {
    auto inst = generate_instance(tiny_params(11, 3, 1, 2));
    auto ctx = make_context(inst);
    auto res = solve_exact(ctx);
    const auto [p1, p2] = chance_probability(res.design, ctx, 0);

    // simulate the assumed normal model for both aggregates
    const Scenario& sc = inst.scenarios[0];
    double m1 = 0.0, q = 0.0;
    for (int i = 0; i < 3; ++i) {
        m1 += sc.probability * sc.node_risk_free(i, 0) * res.design.open(i, 0);
        for (int j = 0; j < 3; ++j)
            q += sc.probability * sc.link_risk_free(i, j, 0) * res.design.links[0](i, j, 0);
    }
    std::mt19937_64 gen(7);
    std::normal_distribution<double> n1(m1, ctx.scale.sigma1), n2(q, ctx.scale.sigma2);
    long hit1 = 0, hit2 = 0;
    const long N = 1'000'000;
    for (long k = 0; k < N; ++k) {
        if (n1(gen) <= sc.node_threshold) ++hit1;
        if (n2(gen) <= sc.link_threshold) ++hit2;
    }
    CHECK(std::abs(p1 * p2 -
                   (static_cast<double>(hit1) / N) * (static_cast<double>(hit2) / N)) <= 0.02);
}

TEST_CASE("risk scale floors at 1e-6") {
    auto inst = zero_score_instance(2, 1);
    auto scale = compute_risk_scale(inst);
    CHECK(scale.sigma1 == doctest::Approx(1e-6));
    CHECK(scale.sigma2 == doctest::Approx(1e-6));
}

TEST_CASE("all-zero scores and thresholds give zero best risk") {
    auto inst = zero_score_instance(2, 1);
    auto scale = compute_risk_scale(inst);
    CHECK(best_risk_per_scenario(inst, scale, 0) == doctest::Approx(0.0));
}

TEST_CASE("symmetric link scores make the best risk link-choice independent") {
    GeneratorParams p = tiny_params(5, 3, 1, 1);
    p.score_min = p.score_max = 4.0;  // every link identical
    auto inst = generate_instance(p);
    auto scale = compute_risk_scale(inst);
    // with identical scores the enumeration's choice cannot matter; value is
    // determined by how many hubs open, checked against a direct recompute
    const double psi = best_risk_per_scenario(inst, scale, 0);
    const Scenario& sc = inst.scenarios[0];
    double best = kInf;
    for (int m = 1; m < 8; ++m) {
        double m1 = 0.0;
        for (int i = 0; i < 3; ++i)
            if (m >> i & 1) m1 += sc.probability * sc.node_risk_free(i, 0);
        const double n1 = sc.node_threshold - m1;
        const double n2 = sc.link_threshold - sc.probability * 4.0;
        best = std::min(best, n1 * n2);
    }
    CHECK(psi == doctest::Approx(best / (scale.sigma1 * scale.sigma2)).epsilon(1e-9));
}

TEST_CASE("best risk matches brute force over hub patterns and integral links") {
    auto inst = generate_instance(tiny_params(11, 3, 1, 2));
    auto scale = compute_risk_scale(inst);
    auto best = best_risk_all(inst, scale);
    for (int s = 0; s < 2; ++s) {
        const Scenario& sc = inst.scenarios[s];
        double ref = kInf;
        for (int m = 1; m < 8; ++m) {
            double m1 = 0.0;
            for (int i = 0; i < 3; ++i)
                if (m >> i & 1) m1 += sc.probability * sc.node_risk_free(i, 0);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    if (!(m >> i & 1) || !(m >> j & 1)) continue;
                    const double q = sc.probability * sc.link_risk_free(i, j, 0);
                    ref = std::min(ref, (sc.node_threshold - m1) * (sc.link_threshold - q));
                }
        }
        CHECK(best.psi_raw[s] == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("constraint family counts match the closed forms") {
    auto inst = generate_instance(tiny_params(1, 2, 1, 1));
    auto ctx = make_context(inst);
    auto built = build_linearized_milp(ctx);
    const int H = 2, T = 1, S = 1;
    CHECK(built.counts.assignment == S * T);
    CHECK(built.counts.degree == H * S * T);
    CHECK(built.counts.risk == S);
    CHECK(built.counts.v_lower == H * T);
    CHECK(built.counts.v_upper == H * T);
    CHECK(built.counts.l_lower == H * H * S * T);
    CHECK(built.counts.l_upper == H * H * S * T);
    CHECK(built.counts.q_lower == H * H * S * T);
    CHECK(built.counts.q_upper == H * H * S * T);
    CHECK(built.counts.q_le_v == H * H * S * T);
    CHECK(built.counts.q_le_l == H * H * S * T);
    const int expected_rows = S * T + H * S * T + S + 2 * H * T + 6 * H * H * S * T;
    CHECK(built.mip.base.num_rows() == expected_rows);
    CHECK(built.mip.base.num_vars() == 2 * H * T + 1 + 3 * H * H * S * T);
    CHECK(static_cast<int>(built.mip.binary_ids.size()) == 2 * H * T);
}

TEST_CASE("structured exact solver equals generic branch-and-bound") {
    for (uint64_t seed : {1u, 2u, 5u, 11u}) {
        for (int T : {1, 2}) {
            auto inst = generate_instance(tiny_params(seed, 3, T, 2));
            auto ctx = make_context(inst);
            auto exact = solve_exact(ctx);
            auto built = build_linearized_milp(ctx);
            auto mip = solve_mip(built.mip);
            INFO("seed ", seed, " T ", T);
            REQUIRE(mip.status == MipStatus::Optimal);
            CHECK(exact.objective == doctest::Approx(mip.objective_value).epsilon(5e-6));
            // and equals the enumeration oracle
            auto oracle = enumerate_binary_optimum(built.mip);
            CHECK(exact.objective == doctest::Approx(oracle.objective_value).epsilon(5e-6));
        }
    }
}

TEST_CASE("evaluate_objective agrees with the solver objective at the optimum") {
    auto inst = generate_instance(tiny_params(1, 3, 2, 2));
    auto ctx = make_context(inst);
    auto exact = solve_exact(ctx);
    CHECK(evaluate_objective(exact.design, ctx) ==
          doctest::Approx(exact.objective).epsilon(1e-8));
}

TEST_CASE("linearization exactness at every integral feasible point (|H|=2)") {
    // enumerate all binary (Z, V, L, Q, X); the product-linearization rows must
    // admit exactly the points where V=Z*Z, L=Z*X, Q=V*X
    auto inst = generate_instance(tiny_params(4, 2, 2, 1));
    auto ctx = make_context(inst);
    auto built = build_linearized_milp(ctx);
    const auto& L = built.layout;
    const int H = 2, T = 2;
    long feasible = 0;
    for (int bits = 0; bits < (1 << 16); ++bits) {
        int k = 0;
        auto bit = [&](int) { return (bits >> k++) & 1; };
        std::vector<double> pt(built.mip.base.num_vars(), 0.0);
        for (int i = 0; i < H; ++i)
            for (int t = 0; t < T; ++t) pt[L.z(i, t)] = bit(0);
        for (int i = 0; i < H; ++i)
            for (int t = 0; t < T; ++t) pt[L.v(i, t)] = bit(0);
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j) pt[L.x(0, i, j, 0)] = bit(0);
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j) pt[L.l(0, i, j, 0)] = bit(0);
        // restrict to one period's L/X to keep the sweep at 2^16; remaining
        // variables mirror period 0
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j) {
                pt[L.x(0, i, j, 1)] = pt[L.x(0, i, j, 0)];
                pt[L.l(0, i, j, 1)] = pt[L.l(0, i, j, 0)];
                pt[L.q(0, i, j, 0)] = bit(0) & 1;
                pt[L.q(0, i, j, 1)] = pt[L.q(0, i, j, 0)];
            }
        // check the product-linearization families only
        bool ok = true;
        for (const auto& row : built.mip.base.rows) {
            // skip assignment (Equal rows), degree and risk rows (those carry
            // gamma); product rows touch only Z,V,L,Q,X
            if (row.rel == Relation::Equal) continue;
            bool touches_gamma = false;
            bool has_degree_shape = false;
            for (auto& [id, c] : row.terms) {
                if (id == L.gamma_id) touches_gamma = true;
                (void)c;
            }
            if (touches_gamma) continue;
            if (row.terms.size() > 4) has_degree_shape = true;  // degree rows
            if (has_degree_shape) continue;
            double act = 0.0;
            for (auto& [id, c] : row.terms) act += c * pt[id];
            if (act > row.rhs + 1e-9) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        ++feasible;
        for (int i = 0; i < H; ++i)
            for (int t = 0; t < T; ++t) {
                const double zprev = t == 0 ? 0.0 : pt[L.z(i, t - 1)];
                CHECK(pt[L.v(i, t)] == doctest::Approx(zprev * pt[L.z(i, t)]));
                for (int j = 0; j < H; ++j) {
                    CHECK(pt[L.l(0, i, j, t)] ==
                          doctest::Approx(pt[L.z(i, t)] * pt[L.x(0, i, j, t)]));
                    CHECK(pt[L.q(0, i, j, t)] ==
                          doctest::Approx(pt[L.v(i, t)] * pt[L.x(0, i, j, t)]));
                }
            }
    }
    CHECK(feasible > 0);
}

TEST_CASE("TU consequence: integral X once hubs are fixed (no risk rows)") {
    auto inst = generate_instance(tiny_params(9, 4, 1, 1));
    auto ctx = make_context(inst);
    MilpOptions opts;
    opts.include_risk_rows = false;  // pure routing polytope
    auto built = build_linearized_milp(ctx, opts);
    const auto& L = built.layout;
    LpSolver session;
    session.load(built.mip.base);
    CounterRng rng(99);
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        int mask = 1 + static_cast<int>(rng.bits("mask", trial) % 15);
        for (int i = 0; i < 4; ++i) {
            const int z = (mask >> i) & 1;
            session.set_bounds(L.z(i, 0), z, z);
            session.set_bounds(L.v(i, 0), 0, 0);
        }
        auto sol = session.solve();
        if (sol.status != LpStatus::Optimal) continue;
        ++checked;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const double x = sol.primal[L.x(0, i, j, 0)];
                CHECK(std::abs(x - std::round(x)) <= 1e-6);
            }
    }
    CHECK(checked >= 50);
}

TEST_CASE("regret floor: nonnegative minimax regret, zero on constructed ties") {
    // identical scenarios: one design is optimal for every scenario
    GeneratorParams p = tiny_params(6, 3, 1, 3);
    p.score_min = p.score_max = 2.0;
    auto inst = generate_instance(p);
    // make scenarios identical by copying scenario 0
    for (int s = 1; s < 3; ++s) {
        auto prob = inst.scenarios[s].probability;
        inst.scenarios[s] = inst.scenarios[0];
        inst.scenarios[s].probability = prob;
    }
    auto ctx = make_context(inst);
    auto res = solve_exact(ctx);
    double worst = -kInf;
    for (int s = 0; s < 3; ++s) worst = std::max(worst, risk_regret(res.design, ctx, s));
    CHECK(worst >= -1e-9);
}

TEST_CASE("zero-threshold, zero-score regret collapses to zero") {
    auto inst = zero_score_instance(2, 1);
    auto ctx = make_context(inst);
    auto res = solve_exact(ctx);
    CHECK(risk_regret(res.design, ctx, 0) == doctest::Approx(0.0));
}

TEST_CASE("scaling bounds bracket the weighted optimum") {
    auto inst = generate_instance(tiny_params(1, 3, 1, 2));
    auto ctx = make_context(inst);
    auto res = solve_exact(ctx);
    const double cost = design_cost(res.design, ctx.instance);
    CHECK(ctx.bounds.omega_star <= cost + 1e-6);
    CHECK(res.design.regret >= ctx.bounds.gamma_star - 1e-6);
    CHECK(ctx.bounds.gamma_max > ctx.bounds.gamma_star);
    CHECK(ctx.bounds.omega_max > ctx.bounds.omega_star);
}

TEST_CASE("pure-risk weighting keeps the normalized regret term in [0,1]") {
    auto inst = generate_instance(tiny_params(2, 3, 1, 2));
    auto ctx = make_context(inst);
    ExactOptions opts;
    opts.theta_override = {{1.0, 0.0}};
    auto res = solve_exact(ctx, opts);
    const double norm = (res.design.regret - ctx.bounds.gamma_star) /
                        (ctx.bounds.gamma_max - ctx.bounds.gamma_star);
    CHECK(norm >= -1e-9);
    CHECK(norm <= 1.0 + 1e-9);
}

TEST_CASE("degenerate payoff table activates padding") {
    GeneratorParams p = tiny_params(8, 2, 1, 1);
    p.cost_min = p.cost_max = 15.0;       // equal leg costs
    p.flow_factor_min = p.flow_factor_max = 0.6;
    p.score_min = p.score_max = 0.0;
    p.threshold_lo_factor = p.threshold_hi_factor = 0.0;
    auto inst = generate_instance(p);
    auto scale = compute_risk_scale(inst);
    auto best = best_risk_all(inst, scale);
    auto bounds = estimate_scaling_bounds(inst, scale, best);
    CHECK(bounds.gamma_max > bounds.gamma_star);
    CHECK(bounds.omega_max > bounds.omega_star);
}

TEST_CASE("theta1=0 coincides with the pure cost optimum") {
    auto inst = generate_instance(tiny_params(1, 3, 1, 2));
    auto ctx = make_context(inst);
    ExactOptions cost_only;
    cost_only.theta_override = {{0.0, 1.0}};
    auto a = solve_exact(ctx, cost_only);
    ExactOptions rfm;
    rfm.theta_override = {{0.0, 1.0}};
    rfm.risk_rows = false;
    auto b = solve_exact(ctx, rfm);
    CHECK(design_cost(a.design, inst) == doctest::Approx(design_cost(b.design, inst)));
}

TEST_CASE("second stage value matches a singleton objective evaluation") {
    auto inst = generate_instance(tiny_params(5, 3, 1, 3));
    auto ctx = make_context(inst);
    auto res = solve_exact(ctx);
    for (int s = 0; s < 3; ++s) {
        const double v = second_stage_value(ctx, res.design.open, res.design.carryover, s);
        CHECK(std::isfinite(v));
    }
}
