#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prhr/util.hpp"

namespace prhr {

enum class Sense { Minimize, Maximize };
enum class Relation { LessEqual, Equal, GreaterEqual };
enum class LpStatus { Optimal, Infeasible, Unbounded };

// Raised when pivot magnitudes stay below the zero-pivot tolerance even after
// the Bland fallback; callers may perturb the problem and retry.
class NumericalBreakdown : public std::runtime_error {
  public:
    explicit NumericalBreakdown(const std::string& what) : std::runtime_error(what) {}
};

struct LpRow {
    std::vector<std::pair<int, double>> terms;  // (variable id, coefficient)
    Relation rel = Relation::LessEqual;
    double rhs = 0.0;
};

struct LinearProgram {
    Sense sense = Sense::Minimize;
    double objective_offset = 0.0;
    std::vector<double> objective;  // per variable id
    std::vector<double> lower;      // default 0
    std::vector<double> upper;      // default +inf
    std::vector<LpRow> rows;
    std::vector<std::string> var_names;  // optional; used by the debug dump

    int add_variable(double lb = 0.0, double ub = kInf, double obj = 0.0, std::string name = {});
    int add_row(std::vector<std::pair<int, double>> terms, Relation rel, double rhs);
    int num_vars() const { return static_cast<int>(objective.size()); }
    int num_rows() const { return static_cast<int>(rows.size()); }

    // Throws std::invalid_argument when a structural invariant is broken:
    // out-of-registry variable ids, empty rows, or lower > upper.
    void validate() const;
};

// Dual sign convention (minimization): <= and >= rows report duals >= 0,
// equality rows are free. For a Maximize program the reported values are the
// duals of the negated-objective minimization.
struct LpSolution {
    LpStatus status = LpStatus::Optimal;
    double objective_value = 0.0;
    std::vector<double> primal;         // per variable
    std::vector<double> dual;           // per row
    std::vector<double> reduced_costs;  // per variable
    // Present iff status == Infeasible. Multipliers lambda_i with lambda >= 0
    // on <= rows, lambda <= 0 on >= rows, free on equalities, such that the
    // aggregated row is violated by every point of the bound box.
    std::vector<double> farkas_ray;
    std::vector<int32_t> basis;  // snapshot usable as a warm-start hint
    long iterations = 0;
};

struct SimplexOptions {
    double feas_tol = 1e-7;
    double opt_tol = 1e-7;
    double zero_pivot = 1e-12;
    long max_iters = 5'000'000;
    // Dantzig pricing switches to Bland's rule after this many iterations
    // without objective improvement, scaled by (rows + cols).
    double bland_after_factor = 3.0;
};

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& opts = {});

LpSolution solve_lp_warm(const LinearProgram& lp, const std::vector<int32_t>& basis_hint,
                         const SimplexOptions& opts = {});

// Reusable solver session. Re-solving after bound or objective changes (and
// after appending rows through load()) reuses the current basis, which is what
// makes branch-and-bound dives and enumeration sweeps cheap. A load() whose
// structural columns or existing rows differ from the loaded program falls
// back to a cold start automatically.
class LpSolver {
  public:
    explicit LpSolver(SimplexOptions opts = {});
    ~LpSolver();
    LpSolver(LpSolver&&) noexcept;
    LpSolver& operator=(LpSolver&&) noexcept;
    LpSolver(const LpSolver&) = delete;
    LpSolver& operator=(const LpSolver&) = delete;

    void load(const LinearProgram& lp);
    void set_bounds(int var, double lo, double hi);
    void set_objective(int var, double coef);
    LpSolution solve();

    struct Impl;

  private:
    std::unique_ptr<Impl> impl_;
};

struct CertificateReport {
    bool primal_feasible = false;
    bool dual_feasible = false;
    bool complementary_slackness = false;
    bool farkas_valid = false;
    bool duality_gap_ok = false;
    double max_primal_violation = 0.0;
    double duality_gap = 0.0;
    double farkas_margin = 0.0;

    bool all_ok(LpStatus status) const {
        if (status == LpStatus::Infeasible) return farkas_valid;
        if (status == LpStatus::Unbounded) return true;
        return primal_feasible && dual_feasible && complementary_slackness && duality_gap_ok;
    }
};

CertificateReport check_certificate(const LinearProgram& lp, const LpSolution& sol,
                                    const SimplexOptions& opts = {});

// Plain-text fixed layout, one constraint per line: "c*var + c*var <= rhs".
void dump_lp(const LinearProgram& lp, std::ostream& os);

}  // namespace prhr
