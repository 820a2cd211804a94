#pragma once

#include <stdexcept>
#include <vector>

#include "prhr/lp.hpp"

namespace prhr {

class TooManyBinaries : public std::runtime_error {
  public:
    explicit TooManyBinaries(const std::string& what) : std::runtime_error(what) {}
};

// Budget expired before any integral feasible point was found.
class NoIncumbentFound : public std::runtime_error {
  public:
    explicit NoIncumbentFound(const std::string& what) : std::runtime_error(what) {}
};

struct MixedIntegerProgram {
    LinearProgram base;
    std::vector<int> binary_ids;  // variables constrained to {0,1}

    // binary_ids must reference registered variables whose bounds lie in [0,1].
    void validate() const;
};

enum class MipStatus { Optimal, Infeasible, LimitReached };

struct MipLimits {
    long node_budget = 2'000'000;
    double time_budget_s = kInf;
    double rel_gap = 1e-6;
};

struct MipSolution {
    MipStatus status = MipStatus::Optimal;
    std::vector<double> incumbent;  // per variable; empty when none found
    double objective_value = kInf;  // minimization orientation of `base.sense`
    double best_bound = -kInf;
    long nodes_explored = 0;
    bool bound_monotone = true;  // best-bound sequence never decreased
    bool has_incumbent() const { return !incumbent.empty(); }
};

// LP-based branch and bound over the binary variables: most-fractional
// branching (ties to the smallest id), best-bound node selection (FIFO among
// equal bounds). Throws NoIncumbentFound when limits expire with no integral
// point. status == Optimal guarantees a relative gap <= limits.rel_gap.
MipSolution solve_mip(const MixedIntegerProgram& mip, const MipLimits& limits = {});

// Ground-truth oracle: enumerate every binary assignment (hard cap 24),
// solving the continuous remainder for each; ties broken by the
// lexicographically smallest binary vector.
MipSolution enumerate_binary_optimum(const MixedIntegerProgram& mip);

}  // namespace prhr
