#pragma once

#include "prhr/benders.hpp"

namespace prhr {

class RestrictedInfeasible : public std::runtime_error {
  public:
    explicit RestrictedInfeasible(const std::string& what) : std::runtime_error(what) {}
};

class TooFewReplications : public std::runtime_error {
  public:
    explicit TooFewReplications(const std::string& what) : std::runtime_error(what) {}
};

struct LrConfig {
    double eps_lr = 0.001;   // stop when the step parameter drops below this
    double sigma0 = 2.0;
    int iter1_max = 30;
    double time_max_s = 10000.0;
    bool free_d2 = false;  // lift the nonnegativity projection on the
                           // assignment-row multipliers (off = printed rule)
    bool inner_direct_mip = false;  // classical variant: relaxation as one MIP
    BdConfig inner;                 // decomposition settings
    MipLimits direct_limits;        // classical variant budget
    double ub_time_budget_s = 30.0; // restricted upper-bound solve budget
};

struct SubgradientState {
    int iteration = 0;
    double sigma = 2.0;
    double theta = 0.0;
    int noipr = 0;
    double best_lb = -kInf;
    double best_ub = kInf;
};

// Relaxation of the weighted model: assignment and risk rows removed, their
// multiplier terms folded into the objective. Shares the layout of the full
// model.
BuiltMilp build_lrp(const ModelContext& ctx, const Multipliers& d);

struct LrpSolveResult {
    double lb = -kInf;           // valid lower bound on the relaxation optimum
    MasterPoint point;           // first-stage/master variables at the solution
    std::vector<Grid2> x;        // routing per (s*T + t)
    double gamma_raw = 0.0;
    long inner_iterations = 0;
    long master_nodes = 0;
    bool inner_converged = false;
    std::vector<BdTraceRow> inner_trace;
};

LrpSolveResult solve_lrp_lower_bound(const ModelContext& ctx, const Multipliers& d,
                                     const LrConfig& config);

struct UpperBoundResult {
    double ub = kInf;  // objective of a feasible design (restricted optimum
                       // when the budget sufficed)
    NetworkDesign design;
    bool restricted_optimal = false;
};

// Solve the full model with the carryover variables frozen; falls back to the
// all-zero carryover when the frozen pattern admits no consistent opening.
UpperBoundResult upper_bound_by_fixing(const ModelContext& ctx, const Grid2& carryover,
                                       double time_budget_s);

// Bookkeeping shared with the outer loop: halve the step parameter after two
// consecutive iterations without a lower-bound improvement.
inline void apply_noipr_rule(SubgradientState& state, bool improved) {
    if (improved) {
        state.noipr = 0;
        return;
    }
    if (++state.noipr > 1) {
        state.sigma /= 2.0;
        state.noipr = 0;
    }
}

enum class StepOutcome { Ok, ZeroSubgradient };

struct StepResult {
    StepOutcome outcome = StepOutcome::Ok;
    Multipliers multipliers;
    SubgradientState state;
    double norm_sq = 0.0;
};

// One multiplier update: step size sigma*(UB-LB)/||g||^2, d1 projected to be
// nonnegative, d2 likewise unless free_d2 is set.
StepResult subgradient_step(const ModelContext& ctx, const SubgradientState& state,
                            const LrpSolveResult& inner, double ub_lr, const Multipliers& d,
                            const LrConfig& config);

struct LrTraceRow {
    int it_lr = 0;
    double lb_bd = -kInf, lb_lr = -kInf, ub_lr = kInf;
    double sigma = 0.0, theta = 0.0, norm_sq = 0.0;
    long wall_ms = 0;
};

struct LrReport {
    double lb = -kInf;
    double ub = kInf;
    NetworkDesign best_design;
    bool has_design = false;
    int iterations = 0;
    bool zero_subgradient = false;
    long inner_iterations_total = 0;
    long master_nodes = 0;
    std::vector<LrTraceRow> trace;
    std::vector<BdTraceRow> first_inner_trace;  // inner trace of iteration 1
};

LrReport run_lagrangian(const ModelContext& ctx, const LrConfig& config);

}  // namespace prhr
