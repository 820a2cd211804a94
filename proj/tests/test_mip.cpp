#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "corpus.hpp"
#include "prhr/mip.hpp"

using namespace prhr;

TEST_CASE("single binary, min -z") {
    MixedIntegerProgram mip;
    mip.base.add_variable(0.0, 1.0, -1.0);
    mip.base.add_row({{0, 1.0}}, Relation::LessEqual, 1.0);
    mip.binary_ids = {0};
    auto sol = solve_mip(mip);
    REQUIRE(sol.status == MipStatus::Optimal);
    CHECK(sol.objective_value == doctest::Approx(-1.0));
    CHECK(sol.incumbent[0] == doctest::Approx(1.0));
    auto oracle = enumerate_binary_optimum(mip);
    CHECK(oracle.objective_value == doctest::Approx(sol.objective_value));
}

TEST_CASE("two-binary knapsack dominance") {
    MixedIntegerProgram mip;
    mip.base.add_variable(0.0, 1.0, -3.0);
    mip.base.add_variable(0.0, 1.0, -2.0);
    mip.base.add_row({{0, 1.0}, {1, 1.0}}, Relation::LessEqual, 1.0);
    mip.binary_ids = {0, 1};
    auto sol = solve_mip(mip);
    REQUIRE(sol.status == MipStatus::Optimal);
    CHECK(sol.objective_value == doctest::Approx(-3.0));
    CHECK(sol.incumbent[0] == doctest::Approx(1.0));
    CHECK(sol.incumbent[1] == doctest::Approx(0.0));
}

TEST_CASE("infeasible binary via side constraints") {
    MixedIntegerProgram mip;
    mip.base.add_variable(0.0, 1.0, 1.0);
    mip.base.add_row({{0, 1.0}}, Relation::GreaterEqual, 0.5);
    mip.base.add_row({{0, 1.0}}, Relation::LessEqual, 0.4);
    mip.binary_ids = {0};
    auto sol = solve_mip(mip);
    CHECK(sol.status == MipStatus::Infeasible);
    auto oracle = enumerate_binary_optimum(mip);
    CHECK(oracle.status == MipStatus::Infeasible);
}

TEST_CASE("oracle cap") {
    MixedIntegerProgram mip;
    for (int j = 0; j < 25; ++j) {
        mip.base.add_variable(0.0, 1.0, 1.0);
        mip.binary_ids.push_back(j);
    }
    mip.base.add_row({{0, 1.0}}, Relation::LessEqual, 1.0);
    CHECK_THROWS_AS(enumerate_binary_optimum(mip), TooManyBinaries);
}

TEST_CASE("oracle ties break to the lexicographically smallest vector") {
    MixedIntegerProgram mip;
    // two symmetric binaries, objective indifferent, constraint z0+z1 >= 1
    mip.base.add_variable(0.0, 1.0, 1.0);
    mip.base.add_variable(0.0, 1.0, 1.0);
    mip.base.add_row({{0, 1.0}, {1, 1.0}}, Relation::GreaterEqual, 1.0);
    mip.binary_ids = {0, 1};
    auto oracle = enumerate_binary_optimum(mip);
    REQUIRE(oracle.status == MipStatus::Optimal);
    CHECK(oracle.incumbent[0] == doctest::Approx(0.0));
    CHECK(oracle.incumbent[1] == doctest::Approx(1.0));
}

TEST_CASE("branch-and-bound matches enumeration over a 50-case corpus") {
    int compared = 0;
    for (uint64_t seed = 0; seed < 50; ++seed) {
        CounterRng meta(seed + 4242);
        const int nb = 1 + static_cast<int>(meta.bits("nb") % 10);
        const int nc = static_cast<int>(meta.bits("nc") % 4);
        const int nr = 2 + static_cast<int>(meta.bits("nr") % 8);
        auto mip = testgen::random_mip(seed * 31 + 5, nb, nc, nr);
        // keep the continuous part bounded so no unbounded remainders appear
        for (int j = nb; j < nb + nc; ++j)
            if (!std::isfinite(mip.base.upper[j])) mip.base.upper[j] = 25.0;
        MipSolution bb, oracle;
        bb = solve_mip(mip);
        oracle = enumerate_binary_optimum(mip);
        INFO("seed ", seed);
        CHECK(bb.status == oracle.status);
        if (bb.status == MipStatus::Optimal) {
            ++compared;
            CHECK(bb.objective_value ==
                  doctest::Approx(oracle.objective_value).epsilon(1e-6));
            CHECK(bb.bound_monotone);
            // incumbent binaries integral
            for (int id : mip.binary_ids) {
                const double x = bb.incumbent[id];
                CHECK(std::abs(x - std::round(x)) <= 1e-6);
            }
            CHECK(bb.best_bound <= bb.objective_value + 1e-6);
        }
    }
    CHECK(compared >= 25);
}

TEST_CASE("budget expiry raises NoIncumbentFound when nothing integral was seen") {
    MixedIntegerProgram mip;
    for (int j = 0; j < 12; ++j) {
        mip.base.add_variable(0.0, 1.0, -1.0);
        mip.binary_ids.push_back(j);
    }
    std::vector<std::pair<int, double>> all;
    for (int j = 0; j < 12; ++j) all.push_back({j, 1.0});
    mip.base.add_row(all, Relation::Equal, 6.5);  // no integral point sums to 6.5
    MipLimits lim;
    lim.node_budget = 1;  // give up immediately
    CHECK_THROWS_AS(solve_mip(mip, lim), NoIncumbentFound);
}
