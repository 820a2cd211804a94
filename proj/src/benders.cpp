#include "prhr/benders.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

namespace prhr {

Multipliers zero_multipliers(const ModelContext& ctx) {
    Multipliers d;
    d.d1.assign(ctx.instance.n_scenarios(), 0.0);
    d.d2 = Grid2(ctx.instance.n_scenarios(), ctx.instance.n_periods, 0.0);
    return d;
}

const char* cut_strategy_name(CutStrategy s) {
    switch (s) {
        case CutStrategy::SBD: return "sbd";
        case CutStrategy::MBD: return "mbd";
        case CutStrategy::PBD: return "pbd";
        case CutStrategy::MPBD: return "mpbd";
    }
    return "?";
}

double BendersCut::value_at(const MasterPoint& mp) const {
    double acc = 0.0;
    for (const auto& b : blocks) {
        acc += b.constant;
        const int H = static_cast<int>(b.z.size());
        for (int i = 0; i < H; ++i) {
            acc += b.z[i] * mp.Z(i, b.t);
            acc += b.v[i] * mp.V(i, b.t);
            for (int j = 0; j < H; ++j) {
                acc += b.l(i, j) * mp.L[b.s](i, j, b.t);
                acc += b.q(i, j) * mp.Q[b.s](i, j, b.t);
            }
        }
    }
    return acc;
}

namespace {

uint64_t fnv_mix(uint64_t h, uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ull;
    return h;
}

uint64_t round_bits(double x) {
    const double r = std::round(x * 1e9) / 1e9;
    uint64_t bits;
    std::memcpy(&bits, &r, 8);
    return bits == 0x8000000000000000ull ? 0 : bits;  // normalize -0
}

uint64_t cut_fingerprint(const BendersCut& cut) {
    uint64_t h = 0xcbf29ce484222325ull;
    h = fnv_mix(h, static_cast<uint64_t>(cut.kind));
    h = fnv_mix(h, cut.aggregate ? 1 : 0);
    for (const auto& b : cut.blocks) {
        h = fnv_mix(h, static_cast<uint64_t>(b.s) << 16 | static_cast<uint64_t>(b.t));
        for (double v : b.z) h = fnv_mix(h, round_bits(v));
        for (double v : b.v) h = fnv_mix(h, round_bits(v));
        for (double v : b.l.v) h = fnv_mix(h, round_bits(v));
        for (double v : b.q.v) h = fnv_mix(h, round_bits(v));
        h = fnv_mix(h, round_bits(b.constant));
    }
    return h;
}

}  // namespace

bool CutPool::add(BendersCut cut) {
    cut.fingerprint = cut_fingerprint(cut);
    if (!seen.insert(cut.fingerprint).second) return false;
    cuts.push_back(std::move(cut));
    return true;
}

int CutPool::count(BendersCut::Kind kind) const {
    int n = 0;
    for (const auto& c : cuts)
        if (c.kind == kind) ++n;
    return n;
}

// ---- block subproblems --------------------------------------------------------

namespace {

// objective coefficient of the routing variable X_ij in block (s,t)
double block_obj_coef(const ModelContext& ctx, const Multipliers& d, int s, int i, int j,
                      int t) {
    const Scenario& sc = ctx.instance.scenarios[s];
    const double p = sc.probability;
    const double d1r = d.d1[s] / (ctx.scale.sigma1 * ctx.scale.sigma2);
    return ctx.theta2_coef() * p * sc.flow(i, t) * sc.unit_cost(i, j, t) -
           d1r * sc.node_threshold * p * sc.link_risk_free(i, j, t) - d.d2(s, t);
}

void add_block_rows(LinearProgram& lp, const ModelContext& ctx, const MasterPoint& mp, int s,
                    int t, int x_base) {
    const int H = ctx.instance.n_nodes;
    auto X = [&](int i, int j) { return x_base + i * H + j; };
    for (int i = 0; i < H; ++i) {
        std::vector<std::pair<int, double>> terms;
        for (int j = 0; j < H; ++j) terms.push_back({X(i, j), 1.0});
        for (int j = 0; j < H; ++j)
            if (j != i) terms.push_back({X(j, i), 1.0});
        lp.add_row(std::move(terms), Relation::LessEqual, mp.Z(i, t));
    }
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j)
            lp.add_row({{X(i, j), 1.0}}, Relation::LessEqual,
                       mp.L[s](i, j, t) - mp.Z(i, t) + 1.0);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j)
            lp.add_row({{X(i, j), -1.0}}, Relation::LessEqual,
                       mp.Z(i, t) - 2.0 * mp.L[s](i, j, t));
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j)
            lp.add_row({{X(i, j), 1.0}}, Relation::LessEqual,
                       mp.Q[s](i, j, t) - mp.V(i, t) + 1.0);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j)
            lp.add_row({{X(i, j), -1.0}}, Relation::LessEqual,
                       mp.V(i, t) - 2.0 * mp.Q[s](i, j, t));
}

}  // namespace

LinearProgram build_slrp(const ModelContext& ctx, const MasterPoint& mp, const Multipliers& d,
                         int s, int t) {
    const int H = ctx.instance.n_nodes;
    LinearProgram lp;
    lp.sense = Sense::Minimize;
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j)
            lp.add_variable(0.0, kInf, block_obj_coef(ctx, d, s, i, j, t));
    add_block_rows(lp, ctx, mp, s, t, 0);
    return lp;
}

LinearProgram build_slrp_aggregate(const ModelContext& ctx, const MasterPoint& mp,
                                   const Multipliers& d) {
    const int H = ctx.instance.n_nodes, T = ctx.instance.n_periods,
              S = ctx.instance.n_scenarios();
    LinearProgram lp;
    lp.sense = Sense::Minimize;
    for (int s = 0; s < S; ++s)
        for (int t = 0; t < T; ++t)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < H; ++j)
                    lp.add_variable(0.0, kInf, block_obj_coef(ctx, d, s, i, j, t));
    int base = 0;
    for (int s = 0; s < S; ++s)
        for (int t = 0; t < T; ++t) {
            add_block_rows(lp, ctx, mp, s, t, base);
            base += H * H;
        }
    return lp;
}

BlockSolve solve_block_dual(const ModelContext& ctx, const MasterPoint& mp,
                            const Multipliers& d, int s, int t) {
    const int H = ctx.instance.n_nodes;
    LinearProgram lp = build_slrp(ctx, mp, d, s, t);
    LpSolution sol = solve_lp(lp);
    BlockSolve out;
    if (sol.status == LpStatus::Unbounded)
        throw UnboundedBlock("block (" + std::to_string(s) + "," + std::to_string(t) +
                             ") is unbounded; routing variables must be boxed");
    if (sol.status == LpStatus::Infeasible) {
        out.feasible = false;
        out.ray = sol.farkas_ray;
        return out;
    }
    out.value = sol.objective_value;
    out.x = Grid2(H, H, 0.0);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) out.x(i, j) = sol.primal[i * H + j];
    out.duals.u1.assign(H, 0.0);
    out.duals.u2 = Grid2(H, H, 0.0);
    out.duals.u3 = Grid2(H, H, 0.0);
    out.duals.u4 = Grid2(H, H, 0.0);
    out.duals.u5 = Grid2(H, H, 0.0);
    int r = 0;
    for (int i = 0; i < H; ++i) out.duals.u1[i] = sol.dual[r++];
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) out.duals.u2(i, j) = sol.dual[r++];
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) out.duals.u3(i, j) = sol.dual[r++];
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) out.duals.u4(i, j) = sol.dual[r++];
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) out.duals.u5(i, j) = sol.dual[r++];
    return out;
}

namespace {

CutBlockCoefs coefs_from_duals(const BlockDuals& u, int H, int s, int t) {
    CutBlockCoefs b;
    b.s = s;
    b.t = t;
    b.z.assign(H, 0.0);
    b.v.assign(H, 0.0);
    b.l = Grid2(H, H, 0.0);
    b.q = Grid2(H, H, 0.0);
    for (int i = 0; i < H; ++i) {
        b.z[i] = -u.u1[i];
        for (int j = 0; j < H; ++j) {
            b.z[i] += u.u2(i, j) - u.u3(i, j);
            b.v[i] += u.u4(i, j) - u.u5(i, j);
            b.l(i, j) = -u.u2(i, j) + 2.0 * u.u3(i, j);
            b.q(i, j) = -u.u4(i, j) + 2.0 * u.u5(i, j);
            b.constant -= u.u2(i, j) + u.u4(i, j);
        }
    }
    return b;
}

BlockDuals duals_from_ray(const std::vector<double>& ray, int H) {
    BlockDuals u;
    u.u1.assign(H, 0.0);
    u.u2 = Grid2(H, H, 0.0);
    u.u3 = Grid2(H, H, 0.0);
    u.u4 = Grid2(H, H, 0.0);
    u.u5 = Grid2(H, H, 0.0);
    int r = 0;
    for (int i = 0; i < H; ++i) u.u1[i] = std::max(0.0, ray[r++]);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) u.u2(i, j) = std::max(0.0, ray[r++]);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) u.u3(i, j) = std::max(0.0, ray[r++]);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) u.u4(i, j) = std::max(0.0, ray[r++]);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) u.u5(i, j) = std::max(0.0, ray[r++]);
    return u;
}

}  // namespace

BendersCut make_optimality_cut(const ModelContext& ctx, const BlockDuals& duals, int s, int t) {
    BendersCut cut;
    cut.kind = BendersCut::Kind::Optimality;
    cut.s = s;
    cut.t = t;
    cut.blocks.push_back(coefs_from_duals(duals, ctx.instance.n_nodes, s, t));
    return cut;
}

BendersCut make_feasibility_cut(const ModelContext& ctx, const std::vector<double>& ray, int s,
                                int t) {
    BendersCut cut;
    cut.kind = BendersCut::Kind::Feasibility;
    cut.s = s;
    cut.t = t;
    cut.blocks.push_back(
        coefs_from_duals(duals_from_ray(ray, ctx.instance.n_nodes), ctx.instance.n_nodes, s, t));
    return cut;
}

BendersCut aggregate_cuts(const std::vector<BendersCut>& per_block, BendersCut::Kind kind) {
    BendersCut cut;
    cut.kind = kind;
    cut.aggregate = true;
    for (const auto& c : per_block)
        for (const auto& b : c.blocks) cut.blocks.push_back(b);
    return cut;
}

BlockDuals solve_pareto_dual(const ModelContext& ctx, const CorePoint& core,
                             const MasterPoint& mp, const Multipliers& d, int s, int t,
                             double ustar) {
    const int H = ctx.instance.n_nodes;
    // dual polyhedron of the block subproblem: one variable per block row
    LinearProgram lp;
    lp.sense = Sense::Maximize;
    auto id_u1 = [&](int i) { return i; };
    auto id_u = [&](int grp, int i, int j) { return H + (grp - 2) * H * H + i * H + j; };

    // objective: cut value at the core point; equality: value at mp == ustar
    std::vector<double> core_b, mp_b;
    auto push_b = [&](const MasterPoint& pt, std::vector<double>& out) {
        for (int i = 0; i < H; ++i) out.push_back(pt.Z(i, t));
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j) out.push_back(pt.L[s](i, j, t) - pt.Z(i, t) + 1.0);
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j) out.push_back(pt.Z(i, t) - 2.0 * pt.L[s](i, j, t));
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j) out.push_back(pt.Q[s](i, j, t) - pt.V(i, t) + 1.0);
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j) out.push_back(pt.V(i, t) - 2.0 * pt.Q[s](i, j, t));
    };
    push_b(core, core_b);
    push_b(mp, mp_b);

    const int nu = H + 4 * H * H;
    for (int k = 0; k < nu; ++k) lp.add_variable(0.0, kInf, -core_b[k]);

    // dual feasibility: for each routing variable, -(column of block rows)^T u
    // bounded by the block objective coefficient
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) {
            std::vector<std::pair<int, double>> terms;
            terms.push_back({id_u1(i), -1.0});
            if (j != i) terms.push_back({id_u1(j), -1.0});
            terms.push_back({id_u(2, i, j), -1.0});
            terms.push_back({id_u(3, i, j), 1.0});
            terms.push_back({id_u(4, i, j), -1.0});
            terms.push_back({id_u(5, i, j), 1.0});
            lp.add_row(std::move(terms), Relation::LessEqual,
                       block_obj_coef(ctx, d, s, i, j, t));
        }
    // tie to the incumbent optimum
    std::vector<std::pair<int, double>> eq;
    for (int k = 0; k < nu; ++k)
        if (mp_b[k] != 0.0) eq.push_back({k, -mp_b[k]});
    if (eq.empty()) eq.push_back({0, 0.0});
    const int eq_row = lp.add_row(std::move(eq), Relation::Equal, ustar);

    LpSolution sol = solve_lp(lp);
    if (sol.status != LpStatus::Optimal) {
        // numerically impossible equality: retry with a tolerance band
        const double band = 1e-6 * (1.0 + std::abs(ustar));
        lp.rows[eq_row].rel = Relation::LessEqual;
        lp.rows[eq_row].rhs = ustar + band;
        auto terms = lp.rows[eq_row].terms;
        lp.add_row(std::move(terms), Relation::GreaterEqual, ustar - band);
        sol = solve_lp(lp);
        if (sol.status != LpStatus::Optimal)
            throw ADPInfeasible("auxiliary dual problem unsolvable for block (" +
                                std::to_string(s) + "," + std::to_string(t) + ")");
    }
    BlockDuals u;
    u.u1.assign(H, 0.0);
    u.u2 = Grid2(H, H, 0.0);
    u.u3 = Grid2(H, H, 0.0);
    u.u4 = Grid2(H, H, 0.0);
    u.u5 = Grid2(H, H, 0.0);
    for (int i = 0; i < H; ++i) u.u1[i] = sol.primal[id_u1(i)];
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j) {
            u.u2(i, j) = sol.primal[id_u(2, i, j)];
            u.u3(i, j) = sol.primal[id_u(3, i, j)];
            u.u4(i, j) = sol.primal[id_u(4, i, j)];
            u.u5(i, j) = sol.primal[id_u(5, i, j)];
        }
    return u;
}

CorePoint update_core_point(const CorePoint& core, const MasterPoint& incumbent,
                            double lambda) {
    CorePoint out = core;
    auto mix2 = [lambda](Grid2& a, const Grid2& b) {
        for (size_t k = 0; k < a.v.size(); ++k)
            a.v[k] = std::clamp(lambda * a.v[k] + (1.0 - lambda) * b.v[k], 0.0, 1.0);
    };
    auto mix3 = [lambda](Grid3& a, const Grid3& b) {
        for (size_t k = 0; k < a.v.size(); ++k)
            a.v[k] = std::clamp(lambda * a.v[k] + (1.0 - lambda) * b.v[k], 0.0, 1.0);
    };
    mix2(out.Z, incumbent.Z);
    mix2(out.V, incumbent.V);
    for (size_t s = 0; s < out.L.size(); ++s) {
        mix3(out.L[s], incumbent.L[s]);
        mix3(out.Q[s], incumbent.Q[s]);
    }
    return out;
}

// ---- master problem -----------------------------------------------------------

BuiltMaster master_build(const ModelContext& ctx, const CutPool& pool, const Multipliers& d,
                         MasterMode mode) {
    const Instance& inst = ctx.instance;
    const int H = inst.n_nodes, T = inst.n_periods, S = inst.n_scenarios();
    const double t1c = ctx.theta1_coef();
    const double t2c = ctx.theta2_coef();

    BuiltMaster built;
    MilpLayout& L = built.layout;
    L.H = H;
    L.T = T;
    L.S = S;
    L.z_off = 0;
    L.v_off = H * T;
    L.gamma_id = 2 * H * T;
    L.x_off = L.gamma_id + 1;
    L.l_off = L.x_off + H * H * T * S;
    L.q_off = L.l_off + H * H * T * S;
    built.gamma_id = L.gamma_id;

    MixedIntegerProgram& mip = built.mip;
    LinearProgram& lp = mip.base;
    lp.sense = Sense::Minimize;
    const int n_eta = mode == MasterMode::SingleCut ? 1 : S * T;
    lp.objective.assign(L.num_vars() + n_eta, 0.0);
    lp.lower.assign(L.num_vars() + n_eta, 0.0);
    lp.upper.assign(L.num_vars() + n_eta, 1.0);

    // routing columns do not exist in the master; pin them
    for (int s = 0; s < S; ++s)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j)
                for (int t = 0; t < T; ++t) lp.upper[L.x(s, i, j, t)] = 0.0;

    const double inv_ss = 1.0 / (ctx.scale.sigma1 * ctx.scale.sigma2);
    double offset = -t1c * ctx.gamma_star_raw() - t2c * ctx.bounds.omega_star;
    double gamma_coef = t1c;
    for (int s = 0; s < S; ++s) {
        const Scenario& sc = inst.scenarios[s];
        offset += d.d1[s] * inv_ss *
                  (sc.node_threshold * sc.link_threshold - ctx.best.psi_raw[s]);
        gamma_coef -= d.d1[s] * inv_ss;
        for (int t = 0; t < T; ++t) offset += d.d2(s, t);
    }
    lp.objective_offset = offset;
    lp.upper[L.gamma_id] = ctx.gamma_cap_raw;
    lp.objective[L.gamma_id] = gamma_coef;

    for (int i = 0; i < H; ++i)
        for (int t = 0; t < T; ++t) {
            double zc = t2c * inst.fixed_cost(i, t);
            double vc = -t2c * inst.fixed_cost(i, t);
            for (int s = 0; s < S; ++s) {
                const Scenario& sc = inst.scenarios[s];
                const double w = d.d1[s] * inv_ss * sc.link_threshold * sc.probability *
                                 sc.node_risk_free(i, t);
                zc -= w;
                vc += w;
            }
            lp.objective[L.z(i, t)] = zc;
            lp.objective[L.v(i, t)] = vc;
            mip.binary_ids.push_back(L.z(i, t));
        }
    for (int i = 0; i < H; ++i)
        for (int t = 0; t < T; ++t) mip.binary_ids.push_back(L.v(i, t));
    for (int s = 0; s < S; ++s) {
        const Scenario& sc = inst.scenarios[s];
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j)
                for (int t = 0; t < T; ++t) {
                    const double cross = d.d1[s] * inv_ss * sc.probability *
                                         sc.link_risk_free(i, j, t) * sc.node_risk_free(i, t);
                    lp.objective[L.l(s, i, j, t)] = cross;
                    lp.objective[L.q(s, i, j, t)] = -cross;
                    mip.binary_ids.push_back(L.l(s, i, j, t));
                    mip.binary_ids.push_back(L.q(s, i, j, t));
                }
    }

    // eta columns with finite floors so the first relaxation stays bounded
    built.eta_ids.resize(n_eta);
    for (int k = 0; k < n_eta; ++k) {
        const int id = L.num_vars() + k;
        built.eta_ids[k] = id;
        double floor_sum = 1.0;
        if (mode == MasterMode::SingleCut) {
            for (int s = 0; s < S; ++s)
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < H; ++j)
                        for (int t = 0; t < T; ++t)
                            floor_sum += std::abs(block_obj_coef(ctx, d, s, i, j, t));
        } else {
            const int s = k / T, t = k % T;
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < H; ++j)
                    floor_sum += std::abs(block_obj_coef(ctx, d, s, i, j, t));
        }
        lp.lower[id] = -floor_sum;
        lp.upper[id] = kInf;
        lp.objective[id] = 1.0;
    }

    // consistency of V with Z
    for (int i = 0; i < H; ++i)
        for (int t = 0; t < T; ++t) {
            if (t == 0) {
                lp.add_row({{L.z(i, 0), 1.0}, {L.v(i, 0), -1.0}}, Relation::LessEqual, 1.0);
                lp.add_row({{L.v(i, 0), 2.0}, {L.z(i, 0), -1.0}}, Relation::LessEqual, 0.0);
            } else {
                lp.add_row({{L.z(i, t - 1), 1.0}, {L.z(i, t), 1.0}, {L.v(i, t), -1.0}},
                           Relation::LessEqual, 1.0);
                lp.add_row({{L.v(i, t), 2.0}, {L.z(i, t - 1), -1.0}, {L.z(i, t), -1.0}},
                           Relation::LessEqual, 0.0);
            }
        }
    // implied structure of block-feasible points: degree caps on L, tail caps
    // on Q; these tighten the relaxation without excluding any feasible point
    for (int s = 0; s < S; ++s)
        for (int i = 0; i < H; ++i)
            for (int t = 0; t < T; ++t) {
                std::vector<std::pair<int, double>> terms;
                for (int j = 0; j < H; ++j) terms.push_back({L.l(s, i, j, t), 1.0});
                for (int j = 0; j < H; ++j)
                    if (j != i) terms.push_back({L.l(s, j, i, t), 1.0});
                terms.push_back({L.z(i, t), -1.0});
                lp.add_row(std::move(terms), Relation::LessEqual, 0.0);

                std::vector<std::pair<int, double>> qterms;
                for (int j = 0; j < H; ++j) qterms.push_back({L.q(s, i, j, t), 1.0});
                qterms.push_back({L.v(i, t), -1.0});
                lp.add_row(std::move(qterms), Relation::LessEqual, 0.0);
            }

    // cut rows
    for (const auto& cut : pool.cuts) {
        std::vector<std::pair<int, double>> terms;
        double constant = 0.0;
        for (const auto& b : cut.blocks) {
            constant += b.constant;
            for (int i = 0; i < H; ++i) {
                if (b.z[i] != 0.0) terms.push_back({L.z(i, b.t), -b.z[i]});
                if (b.v[i] != 0.0) terms.push_back({L.v(i, b.t), -b.v[i]});
                for (int j = 0; j < H; ++j) {
                    if (b.l(i, j) != 0.0) terms.push_back({L.l(b.s, i, j, b.t), -b.l(i, j)});
                    if (b.q(i, j) != 0.0) terms.push_back({L.q(b.s, i, j, b.t), -b.q(i, j)});
                }
            }
        }
        if (cut.kind == BendersCut::Kind::Optimality) {
            const int eta = cut.aggregate || mode == MasterMode::SingleCut
                                ? built.eta_ids[0]
                                : built.eta_ids[cut.s * T + cut.t];
            terms.push_back({eta, 1.0});
        }
        if (terms.empty()) terms.push_back({L.z(0, 0), 0.0});
        lp.add_row(std::move(terms), Relation::GreaterEqual, constant);
    }
    return built;
}

// ---- value of the relaxation at a master point ---------------------------------

namespace {

double master_side_value(const ModelContext& ctx, const MasterPoint& mp, const Multipliers& d,
                         double* gamma_choice) {
    const Instance& inst = ctx.instance;
    const int H = inst.n_nodes, T = inst.n_periods, S = inst.n_scenarios();
    const double t1c = ctx.theta1_coef();
    const double t2c = ctx.theta2_coef();
    const double inv_ss = 1.0 / (ctx.scale.sigma1 * ctx.scale.sigma2);
    double acc = -t1c * ctx.gamma_star_raw() - t2c * ctx.bounds.omega_star;
    double gamma_coef = t1c;
    for (int s = 0; s < S; ++s) {
        const Scenario& sc = inst.scenarios[s];
        const double d1r = d.d1[s] * inv_ss;
        acc += d1r * (sc.node_threshold * sc.link_threshold - ctx.best.psi_raw[s]);
        gamma_coef -= d1r;
        for (int t = 0; t < T; ++t) acc += d.d2(s, t);
        for (int i = 0; i < H; ++i)
            for (int t = 0; t < T; ++t) {
                acc -= d1r * sc.link_threshold * sc.probability * sc.node_risk_free(i, t) *
                       (mp.Z(i, t) - mp.V(i, t));
                for (int j = 0; j < H; ++j)
                    acc += d1r * sc.probability * sc.link_risk_free(i, j, t) *
                           sc.node_risk_free(i, t) *
                           (mp.L[s](i, j, t) - mp.Q[s](i, j, t));
            }
    }
    for (int i = 0; i < H; ++i)
        for (int t = 0; t < T; ++t)
            acc += t2c * inst.fixed_cost(i, t) * (mp.Z(i, t) - mp.V(i, t));
    const double gamma = gamma_coef >= 0.0 ? 0.0 : ctx.gamma_cap_raw;
    if (gamma_choice) *gamma_choice = gamma;
    return acc + gamma_coef * gamma;
}

}  // namespace

double lrp_value_at(const ModelContext& ctx, const MasterPoint& mp, const Multipliers& d) {
    double value = master_side_value(ctx, mp, d, nullptr);
    for (int s = 0; s < ctx.instance.n_scenarios(); ++s)
        for (int t = 0; t < ctx.instance.n_periods; ++t) {
            auto block = solve_block_dual(ctx, mp, d, s, t);
            if (!block.feasible) return kInf;
            value += block.value;
        }
    return value;
}

// ---- inner loop -----------------------------------------------------------------

namespace {

MasterPoint extract_master_point(const MilpLayout& L, const std::vector<double>& primal) {
    MasterPoint mp;
    mp.Z = Grid2(L.H, L.T, 0.0);
    mp.V = Grid2(L.H, L.T, 0.0);
    mp.L.assign(L.S, Grid3(L.H, L.H, L.T, 0.0));
    mp.Q.assign(L.S, Grid3(L.H, L.H, L.T, 0.0));
    for (int i = 0; i < L.H; ++i)
        for (int t = 0; t < L.T; ++t) {
            mp.Z(i, t) = std::round(primal[L.z(i, t)]);
            mp.V(i, t) = std::round(primal[L.v(i, t)]);
        }
    for (int s = 0; s < L.S; ++s)
        for (int i = 0; i < L.H; ++i)
            for (int j = 0; j < L.H; ++j)
                for (int t = 0; t < L.T; ++t) {
                    mp.L[s](i, j, t) = std::round(primal[L.l(s, i, j, t)]);
                    mp.Q[s](i, j, t) = std::round(primal[L.q(s, i, j, t)]);
                }
    return mp;
}

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

BdReport run_benders(const ModelContext& ctx, const Multipliers& d, const BdConfig& config) {
    const Instance& inst = ctx.instance;
    const int T = inst.n_periods, S = inst.n_scenarios();
    const double t_end = now_s() + config.time_budget_s;
    const MasterMode mode =
        (config.strategy == CutStrategy::SBD || config.strategy == CutStrategy::PBD)
            ? MasterMode::SingleCut
            : MasterMode::MultiCut;
    const bool pareto =
        config.strategy == CutStrategy::PBD || config.strategy == CutStrategy::MPBD;

    BdReport rep;
    CutPool pool;
    CorePoint core;
    bool core_ready = false;
    int stall = 0;

    for (int it = 1; it <= config.iter2_max; ++it) {
        auto master = master_build(ctx, pool, d, mode);
        MipSolution msol = solve_mip(master.mip, config.master_limits);
        rep.master_nodes += msol.nodes_explored;
        const double prev_lb = rep.lb, prev_ub = rep.ub;
        rep.lb = std::max(rep.lb, msol.best_bound);
        MasterPoint mp = extract_master_point(master.layout, msol.incumbent);
        const double gamma_hat = msol.incumbent[master.gamma_id];

        if (!core_ready) {
            // zero point: open/carryover cores at zero, link cores from the
            // trivially feasible closed-network master solution. Staying a
            // convex combination of block-feasible points keeps the auxiliary
            // dual problems bounded.
            core.Z = Grid2(master.layout.H, T, 0.0);
            core.V = Grid2(master.layout.H, T, 0.0);
            core.L.assign(S, Grid3(master.layout.H, master.layout.H, T, 0.0));
            core.Q.assign(S, Grid3(master.layout.H, master.layout.H, T, 0.0));
            core_ready = true;
        }

        // blocks in lexicographic order
        std::vector<BlockSolve> blocks(static_cast<size_t>(S) * T);
        bool all_feasible = true;
        for (int s = 0; s < S; ++s)
            for (int t = 0; t < T; ++t) {
                blocks[s * T + t] = solve_block_dual(ctx, mp, d, s, t);
                if (!blocks[s * T + t].feasible) all_feasible = false;
            }

        int added = 0;
        // feasibility cuts first
        std::vector<BendersCut> feas_cuts;
        for (int s = 0; s < S; ++s)
            for (int t = 0; t < T; ++t) {
                if (blocks[s * T + t].feasible) continue;
                feas_cuts.push_back(make_feasibility_cut(ctx, blocks[s * T + t].ray, s, t));
            }
        if (!feas_cuts.empty()) {
            if (mode == MasterMode::SingleCut) {
                if (pool.add(aggregate_cuts(feas_cuts, BendersCut::Kind::Feasibility))) ++added;
            } else {
                for (auto& c : feas_cuts)
                    if (pool.add(std::move(c))) ++added;
            }
        }

        if (all_feasible) {
            double block_total = 0.0;
            for (const auto& b : blocks) block_total += b.value;
            double gamma_choice = 0.0;
            const double ubc = master_side_value(ctx, mp, d, &gamma_choice) + block_total;
            if (ubc < rep.ub) rep.ub = ubc;
            rep.final_point = mp;
            rep.final_x.assign(blocks.size(), Grid2());
            for (size_t k = 0; k < blocks.size(); ++k) rep.final_x[k] = blocks[k].x;
            rep.gamma_hat_raw = gamma_hat;

            const double gap = (rep.ub - rep.lb) / std::max(1.0, std::abs(rep.ub));
            rep.trace.push_back({it, rep.lb, rep.ub, gap, added,
                                 static_cast<int>(pool.cuts.size())});
            rep.iterations = it;
            if (gap <= config.eps_bd) {
                rep.converged = true;
                break;
            }

            if (pareto) core = update_core_point(core, mp, config.lambda);
            std::vector<BendersCut> opt_cuts;
            for (int s = 0; s < S; ++s)
                for (int t = 0; t < T; ++t) {
                    const auto& blk = blocks[s * T + t];
                    BlockDuals duals = blk.duals;
                    if (pareto) {
                        try {
                            duals = solve_pareto_dual(ctx, core, mp, d, s, t, blk.value);
                        } catch (const ADPInfeasible&) {
                            duals = blk.duals;  // standard cut still valid
                        }
                    }
                    opt_cuts.push_back(make_optimality_cut(ctx, duals, s, t));
                }
            if (mode == MasterMode::SingleCut) {
                if (pool.add(aggregate_cuts(opt_cuts, BendersCut::Kind::Optimality))) ++added;
            } else {
                for (auto& c : opt_cuts)
                    if (pool.add(std::move(c))) ++added;
            }
        } else {
            const double gap = (rep.ub - rep.lb) / std::max(1.0, std::abs(rep.ub));
            rep.trace.push_back({it, rep.lb, rep.ub, gap, added,
                                 static_cast<int>(pool.cuts.size())});
            rep.iterations = it;
        }

        const bool no_progress =
            added == 0 && rep.lb <= prev_lb + 1e-12 && rep.ub >= prev_ub - 1e-12;
        stall = no_progress ? stall + 1 : 0;
        if (stall >= 5) {
            rep.stalled = true;
            break;
        }
        if (now_s() > t_end) break;
    }
    rep.cuts_optimality = pool.count(BendersCut::Kind::Optimality);
    rep.cuts_feasibility = pool.count(BendersCut::Kind::Feasibility);

    if (rep.final_x.empty()) {
        // never saw an all-feasible point; fall back to the closed network
        MasterPoint zero;
        zero.Z = Grid2(inst.n_nodes, T, 0.0);
        zero.V = Grid2(inst.n_nodes, T, 0.0);
        zero.L.assign(S, Grid3(inst.n_nodes, inst.n_nodes, T, 0.0));
        zero.Q.assign(S, Grid3(inst.n_nodes, inst.n_nodes, T, 0.0));
        rep.final_point = zero;
        rep.final_x.assign(static_cast<size_t>(S) * T, Grid2(inst.n_nodes, inst.n_nodes, 0.0));
        for (int s = 0; s < S; ++s)
            for (int t = 0; t < T; ++t) {
                auto blk = solve_block_dual(ctx, zero, d, s, t);
                if (blk.feasible) rep.final_x[s * T + t] = blk.x;
            }
        rep.gamma_hat_raw = 0.0;
    }
    return rep;
}

}  // namespace prhr
