#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <functional>
#include <sstream>

#include "prhr/lp.hpp"
#include "prhr/rng.hpp"
#include "corpus.hpp"

using namespace prhr;

namespace {

// Brute-force vertex enumeration oracle for small LPs: try every choice of
// n active constraints among {rows taken as equalities, variable bounds},
// solve the square system by Gaussian elimination, keep feasible points.
struct VertexOracle {
    bool feasible = false;
    bool bounded_below = true;
    double best = kInf;
};

bool solve_square(std::vector<std::vector<double>> A, std::vector<double>& rhs) {
    const int n = static_cast<int>(rhs.size());
    for (int c = 0; c < n; ++c) {
        int piv = -1;
        double best = 1e-9;
        for (int r = c; r < n; ++r)
            if (std::abs(A[r][c]) > best) {
                best = std::abs(A[r][c]);
                piv = r;
            }
        if (piv < 0) return false;
        std::swap(A[c], A[piv]);
        std::swap(rhs[c], rhs[piv]);
        for (int r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = A[r][c] / A[c][c];
            if (f == 0.0) continue;
            for (int k = c; k < n; ++k) A[r][k] -= f * A[c][k];
            rhs[r] -= f * rhs[c];
        }
    }
    for (int c = 0; c < n; ++c) rhs[c] /= A[c][c];
    return true;
}

VertexOracle enumerate_vertices(const LinearProgram& lp) {
    VertexOracle out;
    const int n = lp.num_vars();
    struct Cand {
        std::vector<double> a;
        double rhs;
    };
    std::vector<Cand> cands;
    for (const auto& row : lp.rows) {
        Cand c;
        c.a.assign(n, 0.0);
        for (auto& [id, coef] : row.terms) c.a[id] += coef;
        c.rhs = row.rhs;
        cands.push_back(c);
    }
    for (int j = 0; j < n; ++j) {
        if (std::isfinite(lp.lower[j])) {
            Cand c;
            c.a.assign(n, 0.0);
            c.a[j] = 1.0;
            c.rhs = lp.lower[j];
            cands.push_back(c);
        }
        if (std::isfinite(lp.upper[j])) {
            Cand c;
            c.a.assign(n, 0.0);
            c.a[j] = 1.0;
            c.rhs = lp.upper[j];
            cands.push_back(c);
        }
    }
    const int k = static_cast<int>(cands.size());
    std::vector<int> idx(n);
    auto feasible = [&](const std::vector<double>& x) {
        for (int j = 0; j < n; ++j)
            if (x[j] < lp.lower[j] - 1e-6 || x[j] > lp.upper[j] + 1e-6) return false;
        for (const auto& row : lp.rows) {
            double act = 0.0;
            for (auto& [id, coef] : row.terms) act += coef * x[id];
            if (row.rel == Relation::LessEqual && act > row.rhs + 1e-6) return false;
            if (row.rel == Relation::GreaterEqual && act < row.rhs - 1e-6) return false;
            if (row.rel == Relation::Equal && std::abs(act - row.rhs) > 1e-6) return false;
        }
        return true;
    };
    // iterate combinations
    std::vector<int> comb(n);
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == n) {
            std::vector<std::vector<double>> A(n, std::vector<double>(n));
            std::vector<double> rhs(n);
            for (int r = 0; r < n; ++r) {
                A[r] = cands[comb[r]].a;
                rhs[r] = cands[comb[r]].rhs;
            }
            if (!solve_square(A, rhs)) return;
            if (!feasible(rhs)) return;
            out.feasible = true;
            double obj = lp.objective_offset;
            for (int j = 0; j < n; ++j) obj += lp.objective[j] * rhs[j];
            if (lp.sense == Sense::Maximize) obj = -obj;
            out.best = std::min(out.best, obj);
            return;
        }
        for (int i = start; i <= k - (n - depth); ++i) {
            comb[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    if (lp.sense == Sense::Maximize && out.feasible) out.best = -out.best;
    return out;
}

using testgen::random_lp;

}  // namespace

TEST_CASE("one-variable identity case") {
    LinearProgram lp;
    lp.add_variable(0.0, kInf, 1.0);
    lp.add_row({{0, 1.0}}, Relation::GreaterEqual, 1.0);
    auto sol = solve_lp(lp);
    REQUIRE(sol.status == LpStatus::Optimal);
    CHECK(sol.objective_value == doctest::Approx(1.0));
    CHECK(sol.primal[0] == doctest::Approx(1.0));
    CHECK(sol.dual[0] == doctest::Approx(1.0));
}

TEST_CASE("symmetric two-variable case") {
    LinearProgram lp;
    lp.add_variable(0.0, kInf, -1.0);
    lp.add_variable(0.0, kInf, -1.0);
    lp.add_row({{0, 1.0}, {1, 1.0}}, Relation::LessEqual, 1.0);
    auto sol = solve_lp(lp);
    REQUIRE(sol.status == LpStatus::Optimal);
    CHECK(sol.objective_value == doctest::Approx(-1.0));
    CHECK(sol.primal[0] + sol.primal[1] == doctest::Approx(1.0));
    CHECK(sol.dual[0] == doctest::Approx(1.0));
}

TEST_CASE("seed-42 3x3 LP matches vertex enumeration") {
    auto lp = random_lp(42, 3, 3);
    auto oracle = enumerate_vertices(lp);
    auto sol = solve_lp(lp);
    if (!oracle.feasible) {
        CHECK(sol.status == LpStatus::Infeasible);
    } else if (sol.status == LpStatus::Optimal) {
        CHECK(sol.objective_value == doctest::Approx(oracle.best).epsilon(1e-6));
    } else {
        CHECK(sol.status == LpStatus::Unbounded);  // oracle only sees vertices
    }
}

TEST_CASE("unbounded detection") {
    LinearProgram lp;
    lp.add_variable(0.0, kInf, -1.0);
    lp.add_row({{0, -1.0}}, Relation::LessEqual, 0.0);
    auto sol = solve_lp(lp);
    CHECK(sol.status == LpStatus::Unbounded);
}

TEST_CASE("infeasible box produces a valid Farkas certificate") {
    LinearProgram lp;
    lp.add_variable(0.0, kInf, 1.0);
    lp.add_row({{0, 1.0}}, Relation::LessEqual, -1.0);
    auto sol = solve_lp(lp);
    REQUIRE(sol.status == LpStatus::Infeasible);
    auto rep = check_certificate(lp, sol);
    CHECK(rep.farkas_valid);
}

TEST_CASE("certificate detects a perturbed primal (seed 7)") {
    auto lp = random_lp(7, 4, 4, false);
    auto sol = solve_lp(lp);
    if (sol.status != LpStatus::Optimal) return;
    auto good = check_certificate(lp, sol);
    CHECK(good.primal_feasible);
    // perturb
    auto bad = sol;
    for (auto& v : bad.primal) v += 1e-3;
    auto rep = check_certificate(lp, bad);
    // either feasibility or complementary slackness must break
    CHECK_FALSE((rep.primal_feasible && rep.complementary_slackness && rep.duality_gap_ok));
}

TEST_CASE("strong duality and Farkas soundness over a random corpus") {
    int optimal = 0, infeasible = 0, unbounded = 0;
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        CounterRng meta(seed);
        const int nv = 2 + static_cast<int>(meta.bits("nv") % 11);  // <= 12
        const int nr = 1 + static_cast<int>(meta.bits("nr") % 12);  // <= 12
        auto lp = random_lp(seed * 7919 + 13, nv, nr);
        LpSolution sol;
        try {
            sol = solve_lp(lp);
        } catch (const NumericalBreakdown&) {
            continue;  // acceptable, rare; counted implicitly
        }
        auto rep = check_certificate(lp, sol);
        INFO("seed ", seed, " status ", static_cast<int>(sol.status), " gap ", rep.duality_gap,
             " viol ", rep.max_primal_violation, " farkas ", rep.farkas_margin);
        switch (sol.status) {
            case LpStatus::Optimal:
                ++optimal;
                CHECK(rep.primal_feasible);
                CHECK(rep.duality_gap_ok);
                break;
            case LpStatus::Infeasible:
                ++infeasible;
                CHECK(rep.farkas_valid);
                break;
            case LpStatus::Unbounded: ++unbounded; break;
        }
    }
    // the corpus must exercise all three statuses
    CHECK(optimal > 200);
    CHECK(infeasible > 50);
    CHECK(unbounded > 20);
}

TEST_CASE("determinism: repeated solves bit-identical") {
    for (uint64_t seed : {3u, 17u, 99u}) {
        auto lp = random_lp(seed, 6, 7);
        auto a = solve_lp(lp);
        auto b = solve_lp(lp);
        CHECK(a.status == b.status);
        CHECK(a.objective_value == b.objective_value);  // bit-identical
    }
}

TEST_CASE("warm re-solve after bound change matches cold solve") {
    for (uint64_t seed = 0; seed < 60; ++seed) {
        auto lp = random_lp(seed + 500, 6, 6, false);
        LpSolver session;
        session.load(lp);
        LpSolution first;
        try {
            first = session.solve();
        } catch (const NumericalBreakdown&) {
            continue;
        }
        if (first.status != LpStatus::Optimal) continue;
        // tighten a variable to a binary-style fixing and compare vs cold
        lp.lower[0] = 0.0;
        lp.upper[0] = 0.0;
        session.set_bounds(0, 0.0, 0.0);
        auto warm = session.solve();
        auto cold = solve_lp(lp);
        CHECK(warm.status == cold.status);
        if (warm.status == LpStatus::Optimal)
            CHECK(warm.objective_value == doctest::Approx(cold.objective_value).epsilon(1e-7));
    }
}

TEST_CASE("warm re-solve after appending a row matches cold solve") {
    for (uint64_t seed = 0; seed < 40; ++seed) {
        auto lp = random_lp(seed + 900, 5, 4, false);
        LpSolver session;
        session.load(lp);
        LpSolution first;
        try {
            first = session.solve();
        } catch (const NumericalBreakdown&) {
            continue;
        }
        if (first.status != LpStatus::Optimal) continue;
        lp.add_row({{0, 1.0}, {1, 1.0}}, Relation::GreaterEqual, 0.5);
        session.load(lp);
        auto warm = session.solve();
        auto cold = solve_lp(lp);
        CHECK(warm.status == cold.status);
        if (warm.status == LpStatus::Optimal)
            CHECK(warm.objective_value == doctest::Approx(cold.objective_value).epsilon(1e-7));
    }
}

TEST_CASE("debug dump fixed layout") {
    LinearProgram lp;
    lp.add_variable(0.0, 1.0, 2.5, "a");
    lp.add_variable(0.0, kInf, -1.0, "bee");
    lp.add_row({{0, 3.5}, {1, -1.0}}, Relation::LessEqual, 4.25);
    std::ostringstream os;
    dump_lp(lp, os);
    CHECK(os.str().find("3.5*a + -1*bee <= 4.25") != std::string::npos);
}
