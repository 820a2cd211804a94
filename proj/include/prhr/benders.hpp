#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "prhr/model.hpp"

namespace prhr {

// Lagrange multipliers: d1 per scenario (>= 0, attached to the standardized
// risk rows), d2 per (scenario, period) (attached to the assignment rows).
// Internally the model works in raw score units, so every use of d1 against a
// raw expression carries a 1/(sigma1*sigma2) factor.
struct Multipliers {
    std::vector<double> d1;
    Grid2 d2;  // (s, t)
};
Multipliers zero_multipliers(const ModelContext& ctx);

enum class CutStrategy { SBD, MBD, PBD, MPBD };
const char* cut_strategy_name(CutStrategy s);

// First-stage value snapshot handed to the subproblems.
struct MasterPoint {
    Grid2 Z, V;               // (i, t)
    std::vector<Grid3> L, Q;  // per scenario, (i, j, t)
};

// Interior point of the master hull used by the Pareto cut machinery.
using CorePoint = MasterPoint;

// One (scenario, period) block's contribution to a cut; aggregate cuts carry
// one entry per block.
struct CutBlockCoefs {
    int s = 0, t = 0;
    std::vector<double> z, v;  // per node
    Grid2 l, q;                // (i, j)
    double constant = 0.0;
};

struct BendersCut {
    enum class Kind { Optimality, Feasibility };
    Kind kind = Kind::Optimality;
    bool aggregate = false;
    int s = -1, t = -1;  // block tag for per-block cuts
    std::vector<CutBlockCoefs> blocks;
    uint64_t fingerprint = 0;
    int source_iteration = 0;

    double value_at(const MasterPoint& mp) const;
};

struct CutPool {
    std::vector<BendersCut> cuts;
    std::unordered_set<uint64_t> seen;

    // false when an identical cut (by rounded-coefficient fingerprint) exists
    bool add(BendersCut cut);
    int count(BendersCut::Kind kind) const;
};

// Block subproblem over that block's routing variables, parameterized by the
// master point; row order is fixed so duals map onto cut coefficients.
LinearProgram build_slrp(const ModelContext& ctx, const MasterPoint& mp,
                         const Multipliers& d, int s, int t);
// Aggregate form across all blocks (used by tests; the solver works per block).
LinearProgram build_slrp_aggregate(const ModelContext& ctx, const MasterPoint& mp,
                                   const Multipliers& d);

class UnboundedBlock : public std::runtime_error {
  public:
    explicit UnboundedBlock(const std::string& what) : std::runtime_error(what) {}
};

class ADPInfeasible : public std::runtime_error {
  public:
    explicit ADPInfeasible(const std::string& what) : std::runtime_error(what) {}
};

struct BlockDuals {
    std::vector<double> u1;  // per node
    Grid2 u2, u3, u4, u5;    // (i, j)
};

struct BlockSolve {
    bool feasible = true;
    double value = 0.0;       // optimal block objective
    BlockDuals duals;         // when feasible
    std::vector<double> ray;  // per block row, when infeasible
    Grid2 x;                  // (i, j) routing at the optimum
};

BlockSolve solve_block_dual(const ModelContext& ctx, const MasterPoint& mp,
                            const Multipliers& d, int s, int t);

BendersCut make_optimality_cut(const ModelContext& ctx, const BlockDuals& duals, int s, int t);
BendersCut make_feasibility_cut(const ModelContext& ctx, const std::vector<double>& ray, int s,
                                int t);
BendersCut aggregate_cuts(const std::vector<BendersCut>& per_block, BendersCut::Kind kind);

// Magnanti-Wong auxiliary problem: among the optimal duals of the block
// subproblem (tied by an equality at the incumbent value), maximize the cut
// value at the core point.
BlockDuals solve_pareto_dual(const ModelContext& ctx, const CorePoint& core,
                             const MasterPoint& mp, const Multipliers& d, int s, int t,
                             double ustar);

CorePoint update_core_point(const CorePoint& core, const MasterPoint& incumbent, double lambda);

enum class MasterMode { SingleCut, MultiCut };

struct BuiltMaster {
    MixedIntegerProgram mip;
    MilpLayout layout;        // Z/V/L/Q ids as in the full model (no X columns)
    std::vector<int> eta_ids; // one (single) or S*T (multi)
    int gamma_id = -1;
    double objective_constant = 0.0;
};

BuiltMaster master_build(const ModelContext& ctx, const CutPool& pool, const Multipliers& d,
                         MasterMode mode);

struct BdConfig {
    CutStrategy strategy = CutStrategy::MPBD;
    double eps_bd = 0.01;
    int iter2_max = 20;
    double lambda = 0.5;
    MipLimits master_limits;
    double time_budget_s = kInf;
};

struct BdTraceRow {
    int it_bd = 0;
    double lb = -kInf, ub = kInf, gap = kInf;
    int cuts_added = 0, cuts_total = 0;
};

struct BdReport {
    double lb = -kInf;
    double ub = kInf;
    bool converged = false;
    bool stalled = false;
    int iterations = 0;
    long cuts_optimality = 0, cuts_feasibility = 0;
    long master_nodes = 0;
    MasterPoint final_point;           // last point with all blocks feasible
    std::vector<Grid2> final_x;        // per (s*T+t): block routings there
    double gamma_hat_raw = 0.0;        // master regret value at that point
    std::vector<BdTraceRow> trace;
};

// Inner decomposition loop at fixed multipliers.
BdReport run_benders(const ModelContext& ctx, const Multipliers& d, const BdConfig& config);

// True relaxation objective at a master point: master-side terms plus the
// optimal block values (infinite when some block is infeasible).
double lrp_value_at(const ModelContext& ctx, const MasterPoint& mp, const Multipliers& d);

}  // namespace prhr
