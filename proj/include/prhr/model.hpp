#pragma once

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "prhr/instance.hpp"
#include "prhr/mip.hpp"

namespace prhr {

// Standard normal CDF by series / continued-fraction evaluation of erfc,
// absolute error well under 1e-9 on [-8, 8].
double normal_cdf(double x);

// Scale used to standardize the two risk aggregates: sample standard
// deviation across scenarios of the total node score and total link score,
// floored at 1e-6.
struct RiskScale {
    double sigma1 = 1.0;
    double sigma2 = 1.0;
};
RiskScale compute_risk_scale(const Instance& inst);

// Per-scenario best achievable risk value. psi_star is in standardized units
// (divided by sigma1*sigma2); psi_raw is the same optimum in raw score units.
struct BestRisk {
    std::vector<double> psi_star;
    std::vector<double> psi_raw;
};
double best_risk_per_scenario(const Instance& inst, const RiskScale& scale, int s);
BestRisk best_risk_all(const Instance& inst, const RiskScale& scale);

// Ideal/nadir values of the two objectives (payoff-table estimate). Gamma
// values are in standardized units, omega values in currency.
struct ScalingBounds {
    double gamma_star = 0.0;
    double gamma_max = 1.0;
    double omega_star = 0.0;
    double omega_max = 1.0;
};

struct NetworkDesign {
    Grid2 open;                // Z(i,t) in {0,1}
    Grid2 carryover;           // V(i,t) = Z(i,t-1)*Z(i,t)
    std::vector<Grid3> links;  // X per scenario, (i,j,t) in [0,1]
    double regret = 0.0;       // gamma, standardized units
};

// Variable layout shared by the full model, its Lagrangian relaxation and the
// Benders master problems.
struct MilpLayout {
    int H = 0, T = 0, S = 0;
    int z_off = 0, v_off = 0, gamma_id = 0, x_off = 0, l_off = 0, q_off = 0;

    int z(int i, int t) const { return z_off + i * T + t; }
    int v(int i, int t) const { return v_off + i * T + t; }
    int x(int s, int i, int j, int t) const {
        return x_off + ((s * H + i) * H + j) * T + t;
    }
    int l(int s, int i, int j, int t) const {
        return l_off + ((s * H + i) * H + j) * T + t;
    }
    int q(int s, int i, int j, int t) const {
        return q_off + ((s * H + i) * H + j) * T + t;
    }
    int num_vars() const { return q_off + H * H * T * S; }
};

struct MilpFamilyCounts {
    int assignment = 0;  // sum of X equals one per (s,t)
    int degree = 0;      // node degree capped by Z
    int risk = 0;        // regret floor per scenario
    int v_lower = 0, v_upper = 0;
    int l_lower = 0, l_upper = 0;
    int q_lower = 0, q_upper = 0;
    int q_le_v = 0, q_le_l = 0;  // product-forcing ties
};

struct MilpOptions {
    bool include_assignment = true;  // dropped by the Lagrangian relaxation
    bool include_risk_rows = true;   // dropped by the relaxation and risk-free variant
    double gamma_upper = kInf;       // finite cap keeps relaxations bounded
    // override the objective weights (payoff-table solves, risk-free baseline)
    std::optional<std::pair<double, double>> theta_override;
};

struct ModelContext;  // below

struct BuiltMilp {
    MixedIntegerProgram mip;
    MilpLayout layout;
    MilpFamilyCounts counts;
};

// Internal precomputed arc/hull tables for the structured solver.
struct ExactTables;

struct ModelContext {
    Instance instance;
    RiskScale scale;
    BestRisk best;
    ScalingBounds bounds;
    double gamma_cap_raw = 0.0;  // safe upper bound on the raw regret variable
    std::shared_ptr<const ExactTables> tables;

    double gamma_star_raw() const { return bounds.gamma_star * scale.sigma1 * scale.sigma2; }
    double gamma_max_raw() const { return bounds.gamma_max * scale.sigma1 * scale.sigma2; }
    // objective weights per unit of raw regret / currency
    double theta1_coef() const;
    double theta2_coef() const;
};

ModelContext make_context(const Instance& inst);

// Same, but with the objective scaling imposed from outside (raw regret units
// plus cost bounds) instead of the per-instance payoff table; keeps values
// comparable across resampled instances.
ModelContext make_context_with_scaling(const Instance& inst, double gamma_star_raw,
                                       double gamma_max_raw, double omega_star,
                                       double omega_max);

ScalingBounds estimate_scaling_bounds(const Instance& inst, const RiskScale& scale,
                                      const BestRisk& best);

// Emits the linearized single-objective model. Binary ids cover Z and V; with
// the product-forcing ties included, the continuous relaxation of X, L, Q is
// exact once Z and V are integral, so the binary set stays enumerable.
// Documented row counts per family (H=|H|, T=|T|, S=|S|):
//   assignment S*T; degree H*S*T; risk S; v_lower/v_upper H*T each;
//   l_lower/l_upper/q_lower/q_upper H^2*S*T each; q_le_v/q_le_l H^2*S*T each.
// Variables: Z,V H*T each (binary); gamma 1; X,L,Q H^2*S*T each (continuous).
BuiltMilp build_linearized_milp(const ModelContext& ctx, const MilpOptions& opts = {});

NetworkDesign design_from_milp_point(const ModelContext& ctx, const MilpLayout& layout,
                                     const std::vector<double>& primal);

// True-probability pair (Phi1(arg1), Phi2(arg2)) for reporting; the
// optimization model works with the standardized arguments themselves.
std::pair<double, double> chance_probability(const NetworkDesign& d, const ModelContext& ctx,
                                             int s);

// Standardized product-form regret for scenario s minus the scenario optimum.
double risk_regret(const NetworkDesign& d, const ModelContext& ctx, int s);

// Setup plus probability-weighted flow cost (the cost objective).
double design_cost(const NetworkDesign& d, const Instance& inst);

// Linearized regret row value for scenario s in raw units (what the model's
// gamma variable must cover).
double design_regret_linearized_raw(const NetworkDesign& d, const Instance& inst,
                                    const BestRisk& best, int s);

// Weighted-sum objective of a design under the context scaling.
double evaluate_objective(const NetworkDesign& d, const ModelContext& ctx);

// ---- structured exact solver -----------------------------------------------
// Exhaustive search over open-hub patterns with the continuous second stage
// solved in closed form (per-period arc hulls + a convex scan over the regret
// level). Exactly matches the linearized model's optimum; verified against
// the generic branch-and-bound in the tests.

struct ExactOptions {
    std::optional<std::pair<double, double>> theta_override;
    bool risk_rows = true;               // false = risk-free variant
    const Grid2* fixed_open = nullptr;   // freeze Z
    const Grid2* fixed_carryover = nullptr;  // freeze V (restricts transitions)
    double time_budget_s = kInf;
};

struct ExactResult {
    NetworkDesign design;
    double objective = kInf;  // omega under the context scaling
    bool proven_optimal = false;
    long patterns_evaluated = 0;
};

ExactResult solve_exact(const ModelContext& ctx, const ExactOptions& opts = {});

// Second-stage value of one scenario with the first stage frozen: the
// scenario is treated as a probability-one singleton, scaling bounds shared
// with the context. Used by the sample-average machinery.
double second_stage_value(const ModelContext& ctx, const Grid2& open, const Grid2& carryover,
                          int s);

class InfeasibleScenario : public std::runtime_error {
  public:
    explicit InfeasibleScenario(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace prhr
