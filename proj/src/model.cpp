#include "prhr/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>

namespace prhr {

// ---- standard normal CDF ----------------------------------------------------

namespace {

// erf by Maclaurin series, adequate for |z| <= 3
double erf_series(double z) {
    const double z2 = z * z;
    double term = z;
    double sum = z;
    for (int n = 1; n < 80; ++n) {
        term *= -z2 / n;
        const double add = term / (2 * n + 1);
        sum += add;
        if (std::abs(add) < 1e-18 * std::abs(sum)) break;
    }
    return sum * 1.1283791670955125739;  // 2/sqrt(pi)
}

// erfc via the Legendre continued fraction, for z >= 3
double erfc_cf(double z) {
    // sqrt(pi) e^{z^2} erfc(z) = 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
    double f = 0.0;
    for (int n = 60; n >= 1; --n) f = (0.5 * n) / (z + f);
    return std::exp(-z * z) / ((z + f) * 1.7724538509055160273);
}

}  // namespace

double normal_cdf(double x) {
    const double z = x * 0.70710678118654752440;  // x / sqrt(2)
    const double az = std::abs(z);
    double tail;  // erfc(az) / 2 = upper-tail probability of |x|
    if (az <= 3.0)
        tail = 0.5 * (1.0 - erf_series(az));
    else if (az < 27.0)
        tail = 0.5 * erfc_cf(az);
    else
        tail = 0.0;
    return x >= 0 ? 1.0 - tail : tail;
}

// ---- risk scale ---------------------------------------------------------------

RiskScale compute_risk_scale(const Instance& inst) {
    const int S = inst.n_scenarios();
    std::vector<double> node_total(S, 0.0), link_total(S, 0.0);
    for (int s = 0; s < S; ++s) {
        const Scenario& sc = inst.scenarios[s];
        node_total[s] = std::accumulate(sc.node_risk_free.v.begin(),
                                        sc.node_risk_free.v.end(), 0.0);
        link_total[s] = std::accumulate(sc.link_risk_free.v.begin(),
                                        sc.link_risk_free.v.end(), 0.0);
    }
    auto sample_sd = [S](const std::vector<double>& v) {
        if (S < 2) return 0.0;
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / S;
        double acc = 0.0;
        for (double x : v) acc += (x - mean) * (x - mean);
        return std::sqrt(acc / (S - 1));
    };
    RiskScale scale;
    scale.sigma1 = std::max(sample_sd(node_total), 1e-6);
    scale.sigma2 = std::max(sample_sd(link_total), 1e-6);
    return scale;
}

// ---- precomputed tables for the structured solver -----------------------------

namespace {

struct HullPoint {
    double rho;   // raw risk contribution of the arc
    double cost;  // probability-weighted flow cost of the arc
    int i, j;
};

// Pareto/convex frontier of arc points, rho ascending, cost descending;
// back() is the cheapest arc (smallest rho among cost ties).
struct Hull {
    std::vector<HullPoint> pts;
};

Hull build_hull(std::vector<HullPoint> pts) {
    Hull hull;
    if (pts.empty()) return hull;
    std::sort(pts.begin(), pts.end(), [](const HullPoint& a, const HullPoint& b) {
        if (a.rho != b.rho) return a.rho < b.rho;
        if (a.cost != b.cost) return a.cost < b.cost;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    // Pareto filter: keep strictly decreasing cost as rho grows
    std::vector<HullPoint> pareto;
    for (const auto& p : pts) {
        if (!pareto.empty() && p.rho == pareto.back().rho) continue;     // same risk, costlier
        if (!pareto.empty() && pareto.back().cost <= p.cost) continue;   // dominated
        pareto.push_back(p);
    }
    // lower convex hull in (rho, cost): slopes (dc/drho) must increase
    std::vector<HullPoint>& out = hull.pts;
    for (const auto& p : pareto) {
        while (out.size() >= 2) {
            const auto& a = out[out.size() - 2];
            const auto& b = out[out.size() - 1];
            // remove b when it lies above segment a-p
            const double lhs = (b.cost - a.cost) * (p.rho - a.rho);
            const double rhs = (p.cost - a.cost) * (b.rho - a.rho);
            if (lhs >= rhs)
                out.pop_back();
            else
                break;
        }
        out.push_back(p);
    }
    return hull;
}

}  // namespace

struct ExactTables {
    int H = 0, T = 0, S = 0;
    // submask ranking: hull_base[cur] + rank(new within cur)
    std::vector<int> mask_card;            // popcount per mask
    std::vector<int> hull_base;            // per open-mask
    int hulls_per_block = 0;               // sum over cur of 2^popcount(cur)
    // hulls[((s*T)+t)*hulls_per_block + idx]
    std::vector<Hull> hulls;
    // risk-score ranges per (s,t,mask) for the best-risk enumeration
    std::vector<double> qmin, qmax;        // [((s*T)+t)<<H | mask]
    // newly-opened-node aggregates per (s,t,newmask) and setup per (t,newmask)
    std::vector<double> m1_new;            // [((s*T)+t)<<H | newmask]
    std::vector<double> setup_new;         // [t<<H | newmask]
    // per (s,t,mask): cheapest arc cost (back of hull), used for bounding
    std::vector<double> minc;              // [((s*T)+t)<<H | mask]
    std::vector<double> sum_minc_best;     // per t: min over masks of sum_s minc

    int submask_rank(int cur, int sub) const {
        // compress sub's bits through cur's set positions
        int rank = 0, bit = 0;
        for (int b = 0; b < H; ++b) {
            if (!(cur >> b & 1)) continue;
            if (sub >> b & 1) rank |= 1 << bit;
            ++bit;
        }
        return rank;
    }
    const Hull& hull(int s, int t, int cur, int newmask) const {
        return hulls[(static_cast<size_t>(s) * T + t) * hulls_per_block + hull_base[cur] +
                     submask_rank(cur, newmask)];
    }
    double at(const std::vector<double>& v, int s, int t, int mask) const {
        return v[((static_cast<size_t>(s) * T + t) << H) | mask];
    }
};

namespace {

std::shared_ptr<const ExactTables> build_tables(const Instance& inst) {
    const int H = inst.n_nodes, T = inst.n_periods, S = inst.n_scenarios();
    if (H > 16 || static_cast<double>(T) * H > 26)
        throw std::invalid_argument("instance too large for the exact pattern solver");
    auto tb = std::make_shared<ExactTables>();
    ExactTables& t = *tb;
    t.H = H;
    t.T = T;
    t.S = S;
    const int M = 1 << H;
    t.mask_card.resize(M);
    t.hull_base.resize(M);
    int acc = 0;
    for (int m = 0; m < M; ++m) {
        t.mask_card[m] = __builtin_popcount(static_cast<unsigned>(m));
        t.hull_base[m] = acc;
        acc += 1 << t.mask_card[m];
    }
    t.hulls_per_block = acc;
    t.hulls.resize(static_cast<size_t>(S) * T * acc);
    t.qmin.assign(static_cast<size_t>(S) * T * M, 0.0);
    t.qmax.assign(static_cast<size_t>(S) * T * M, 0.0);
    t.m1_new.assign(static_cast<size_t>(S) * T * M, 0.0);
    t.minc.assign(static_cast<size_t>(S) * T * M, 0.0);
    t.setup_new.assign(static_cast<size_t>(T) * M, 0.0);
    t.sum_minc_best.assign(T, 0.0);

    for (int tt = 0; tt < T; ++tt)
        for (int m = 0; m < M; ++m) {
            double f = 0.0;
            for (int i = 0; i < H; ++i)
                if (m >> i & 1) f += inst.fixed_cost(i, tt);
            t.setup_new[(static_cast<size_t>(tt) << H) | m] = f;
        }

    for (int s = 0; s < S; ++s) {
        const Scenario& sc = inst.scenarios[s];
        const double p = sc.probability;
        for (int tt = 0; tt < T; ++tt) {
            for (int m = 0; m < M; ++m) {
                double m1 = 0.0;
                for (int i = 0; i < H; ++i)
                    if (m >> i & 1) m1 += p * sc.node_risk_free(i, tt);
                t.m1_new[((static_cast<size_t>(s) * T + tt) << H) | m] = m1;
            }
            for (int cur = 1; cur < M; ++cur) {
                double qlo = kInf, qhi = -kInf;
                for (int i = 0; i < H; ++i) {
                    if (!(cur >> i & 1)) continue;
                    for (int j = 0; j < H; ++j) {
                        if (i != j && !(cur >> j & 1)) continue;
                        const double q = p * sc.link_risk_free(i, j, tt);
                        qlo = std::min(qlo, q);
                        qhi = std::max(qhi, q);
                    }
                }
                t.qmin[((static_cast<size_t>(s) * T + tt) << H) | cur] = qlo;
                t.qmax[((static_cast<size_t>(s) * T + tt) << H) | cur] = qhi;

                // one hull per (open set, newly-opened subset)
                for (int rank = 0, sub = 0;; ++rank) {
                    std::vector<HullPoint> pts;
                    for (int i = 0; i < H; ++i) {
                        if (!(cur >> i & 1)) continue;
                        const bool fresh = sub >> i & 1;
                        for (int j = 0; j < H; ++j) {
                            if (i != j && !(cur >> j & 1)) continue;
                            HullPoint hp;
                            hp.i = i;
                            hp.j = j;
                            hp.cost = p * sc.flow(i, tt) * sc.unit_cost(i, j, tt);
                            hp.rho = p * sc.link_risk_free(i, j, tt) *
                                     (-sc.node_threshold +
                                      (fresh ? sc.node_risk_free(i, tt) : 0.0));
                            pts.push_back(hp);
                        }
                    }
                    t.hulls[(static_cast<size_t>(s) * T + tt) * t.hulls_per_block +
                            t.hull_base[cur] + rank] = build_hull(std::move(pts));
                    // next submask of cur
                    sub = (sub - cur) & cur;
                    if (sub == 0) break;
                }
            }
        }
    }
    // cheapest arc cost per open set (independent of the newly-opened subset)
    for (int s = 0; s < S; ++s)
        for (int tt = 0; tt < T; ++tt)
            for (int cur = 1; cur < M; ++cur) {
                const Hull& h =
                    t.hulls[(static_cast<size_t>(s) * T + tt) * t.hulls_per_block +
                            t.hull_base[cur]];
                t.minc[((static_cast<size_t>(s) * T + tt) << H) | cur] = h.pts.back().cost;
            }
    for (int tt = 0; tt < T; ++tt) {
        double best = kInf;
        for (int cur = 1; cur < M; ++cur) {
            double acc2 = 0.0;
            for (int s = 0; s < S; ++s)
                acc2 += t.at(t.minc, s, tt, cur);
            best = std::min(best, acc2);
        }
        t.sum_minc_best[tt] = best;
    }
    return tb;
}

}  // namespace

// ---- best risk ----------------------------------------------------------------

namespace {

// Exact minimum over hub patterns and routings of the raw product
// (node threshold - opened-node scores) * (link threshold - routed link scores).
std::vector<double> best_risk_raw_all(const Instance& inst, const ExactTables& tb) {
    const int H = inst.n_nodes, T = inst.n_periods, S = inst.n_scenarios();
    const int M = 1 << H;
    std::vector<double> best(S, kInf);
    std::vector<int> masks(T, 0);
    std::vector<double> m1(S, 0.0);       // running opened-node score per scenario
    std::vector<double> qlo(S, 0.0), qhi(S, 0.0);

    // depth-first over period masks
    struct Frame {
        int mask;
    };
    std::vector<std::vector<double>> m1_stack(T + 1, std::vector<double>(S, 0.0));
    std::vector<std::vector<double>> qlo_stack(T + 1, std::vector<double>(S, 0.0));
    std::vector<std::vector<double>> qhi_stack(T + 1, std::vector<double>(S, 0.0));

    std::function<void(int, int)> rec = [&](int t, int prev) {
        for (int cur = 1; cur < M; ++cur) {
            const int fresh = cur & ~prev;
            for (int s = 0; s < S; ++s) {
                m1_stack[t + 1][s] = m1_stack[t][s] + tb.at(tb.m1_new, s, t, fresh);
                qlo_stack[t + 1][s] = qlo_stack[t][s] + tb.at(tb.qmin, s, t, cur);
                qhi_stack[t + 1][s] = qhi_stack[t][s] + tb.at(tb.qmax, s, t, cur);
            }
            if (t + 1 < T) {
                rec(t + 1, cur);
            } else {
                for (int s = 0; s < S; ++s) {
                    const Scenario& sc = inst.scenarios[s];
                    const double n1 = sc.node_threshold - m1_stack[T][s];
                    const double lo = n1 * (sc.link_threshold - qhi_stack[T][s]);
                    const double hi = n1 * (sc.link_threshold - qlo_stack[T][s]);
                    best[s] = std::min(best[s], std::min(lo, hi));
                }
            }
        }
    };
    rec(0, 0);
    (void)masks;
    (void)m1;
    (void)qlo;
    (void)qhi;
    return best;
}

}  // namespace

BestRisk best_risk_all(const Instance& inst, const RiskScale& scale) {
    auto tables = build_tables(inst);
    BestRisk out;
    out.psi_raw = best_risk_raw_all(inst, *tables);
    out.psi_star.resize(out.psi_raw.size());
    const double ss = scale.sigma1 * scale.sigma2;
    for (size_t s = 0; s < out.psi_raw.size(); ++s) out.psi_star[s] = out.psi_raw[s] / ss;
    return out;
}

double best_risk_per_scenario(const Instance& inst, const RiskScale& scale, int s) {
    return best_risk_all(inst, scale).psi_star.at(s);
}

// ---- context -------------------------------------------------------------------

double ModelContext::theta1_coef() const {
    return instance.theta1 / (gamma_max_raw() - gamma_star_raw());
}
double ModelContext::theta2_coef() const {
    return instance.theta2 / (bounds.omega_max - bounds.omega_star);
}

namespace {

double gamma_cap_from(const Instance& inst, const BestRisk& best) {
    double cap = 1.0;
    for (int s = 0; s < inst.n_scenarios(); ++s) {
        const Scenario& sc = inst.scenarios[s];
        const double p = sc.probability;
        double sum_pi2 = 0.0, sum_pi1 = 0.0, sum_cross = 0.0;
        for (int t = 0; t < inst.n_periods; ++t)
            for (int i = 0; i < inst.n_nodes; ++i) {
                sum_pi1 += std::abs(p * sc.node_risk_free(i, t));
                for (int j = 0; j < inst.n_nodes; ++j) {
                    sum_pi2 += std::abs(p * sc.link_risk_free(i, j, t));
                    sum_cross += std::abs(p * sc.link_risk_free(i, j, t) *
                                          sc.node_risk_free(i, t));
                }
            }
        cap = std::max(cap, std::abs(sc.node_threshold * sc.link_threshold) +
                                std::abs(sc.node_threshold) * sum_pi2 +
                                std::abs(sc.link_threshold) * sum_pi1 + sum_cross +
                                std::abs(best.psi_raw[s]));
    }
    return cap;
}

}  // namespace

// ---- builders ------------------------------------------------------------------

BuiltMilp build_linearized_milp(const ModelContext& ctx, const MilpOptions& opts) {
    const Instance& inst = ctx.instance;
    const int H = inst.n_nodes, T = inst.n_periods, S = inst.n_scenarios();
    const double theta1 = opts.theta_override ? opts.theta_override->first : inst.theta1;
    const double theta2 = opts.theta_override ? opts.theta_override->second : inst.theta2;
    const double t1c = theta1 / (ctx.gamma_max_raw() - ctx.gamma_star_raw());
    const double t2c = theta2 / (ctx.bounds.omega_max - ctx.bounds.omega_star);

    BuiltMilp built;
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

    MixedIntegerProgram& mip = built.mip;
    LinearProgram& lp = mip.base;
    lp.sense = Sense::Minimize;
    lp.objective.assign(L.num_vars(), 0.0);
    lp.lower.assign(L.num_vars(), 0.0);
    lp.upper.assign(L.num_vars(), 1.0);
    lp.upper[L.gamma_id] = opts.gamma_upper;
    lp.objective_offset = -t1c * ctx.gamma_star_raw() - t2c * ctx.bounds.omega_star;
    lp.objective[L.gamma_id] = t1c;

    for (int i = 0; i < H; ++i)
        for (int t = 0; t < T; ++t) {
            lp.objective[L.z(i, t)] = t2c * inst.fixed_cost(i, t);
            lp.objective[L.v(i, t)] = -t2c * inst.fixed_cost(i, t);
            mip.binary_ids.push_back(L.z(i, t));
        }
    for (int i = 0; i < H; ++i)
        for (int t = 0; t < T; ++t) mip.binary_ids.push_back(L.v(i, t));

    for (int s = 0; s < S; ++s) {
        const Scenario& sc = inst.scenarios[s];
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j)
                for (int t = 0; t < T; ++t)
                    lp.objective[L.x(s, i, j, t)] =
                        t2c * sc.probability * sc.flow(i, t) * sc.unit_cost(i, j, t);
    }

    MilpFamilyCounts& fc = built.counts;

    if (opts.include_assignment) {
        for (int s = 0; s < S; ++s)
            for (int t = 0; t < T; ++t) {
                std::vector<std::pair<int, double>> terms;
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < H; ++j) terms.push_back({L.x(s, i, j, t), 1.0});
                lp.add_row(std::move(terms), Relation::Equal, 1.0);
                ++fc.assignment;
            }
    }
    for (int s = 0; s < S; ++s)
        for (int i = 0; i < H; ++i)
            for (int t = 0; t < T; ++t) {
                std::vector<std::pair<int, double>> terms;
                for (int j = 0; j < H; ++j) terms.push_back({L.x(s, i, j, t), 1.0});
                for (int j = 0; j < H; ++j)
                    if (j != i) terms.push_back({L.x(s, j, i, t), 1.0});
                terms.push_back({L.z(i, t), -1.0});
                lp.add_row(std::move(terms), Relation::LessEqual, 0.0);
                ++fc.degree;
            }
    if (opts.include_risk_rows) {
        for (int s = 0; s < S; ++s) {
            const Scenario& sc = inst.scenarios[s];
            const double p = sc.probability;
            std::vector<std::pair<int, double>> terms;
            terms.push_back({L.gamma_id, 1.0});
            for (int i = 0; i < H; ++i)
                for (int t = 0; t < T; ++t) {
                    const double c = sc.link_threshold * p * sc.node_risk_free(i, t);
                    terms.push_back({L.z(i, t), c});
                    terms.push_back({L.v(i, t), -c});
                }
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < H; ++j)
                    for (int t = 0; t < T; ++t) {
                        terms.push_back({L.x(s, i, j, t),
                                         sc.node_threshold * p * sc.link_risk_free(i, j, t)});
                        const double cross = p * sc.link_risk_free(i, j, t) *
                                             sc.node_risk_free(i, t);
                        terms.push_back({L.l(s, i, j, t), -cross});
                        terms.push_back({L.q(s, i, j, t), cross});
                    }
            lp.add_row(std::move(terms), Relation::GreaterEqual,
                       sc.node_threshold * sc.link_threshold - ctx.best.psi_raw[s]);
            ++fc.risk;
        }
    }
    for (int i = 0; i < H; ++i)
        for (int t = 0; t < T; ++t) {
            if (t == 0) {
                // pre-horizon state is closed: V(i,0) >= Z(i,0) - 1 is vacuous
                lp.add_row({{L.z(i, 0), 1.0}, {L.v(i, 0), -1.0}}, Relation::LessEqual, 1.0);
                lp.add_row({{L.v(i, 0), 2.0}, {L.z(i, 0), -1.0}}, Relation::LessEqual, 0.0);
            } else {
                lp.add_row({{L.z(i, t - 1), 1.0}, {L.z(i, t), 1.0}, {L.v(i, t), -1.0}},
                           Relation::LessEqual, 1.0);
                lp.add_row({{L.v(i, t), 2.0}, {L.z(i, t - 1), -1.0}, {L.z(i, t), -1.0}},
                           Relation::LessEqual, 0.0);
            }
            ++fc.v_lower;
            ++fc.v_upper;
        }
    for (int s = 0; s < S; ++s)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j)
                for (int t = 0; t < T; ++t) {
                    lp.add_row({{L.z(i, t), 1.0},
                                {L.x(s, i, j, t), 1.0},
                                {L.l(s, i, j, t), -1.0}},
                               Relation::LessEqual, 1.0);
                    ++fc.l_lower;
                    lp.add_row({{L.l(s, i, j, t), 2.0},
                                {L.z(i, t), -1.0},
                                {L.x(s, i, j, t), -1.0}},
                               Relation::LessEqual, 0.0);
                    ++fc.l_upper;
                    lp.add_row({{L.v(i, t), 1.0},
                                {L.x(s, i, j, t), 1.0},
                                {L.q(s, i, j, t), -1.0}},
                               Relation::LessEqual, 1.0);
                    ++fc.q_lower;
                    lp.add_row({{L.q(s, i, j, t), 2.0},
                                {L.v(i, t), -1.0},
                                {L.x(s, i, j, t), -1.0}},
                               Relation::LessEqual, 0.0);
                    ++fc.q_upper;
                    lp.add_row({{L.q(s, i, j, t), 1.0}, {L.v(i, t), -1.0}},
                               Relation::LessEqual, 0.0);
                    ++fc.q_le_v;
                    lp.add_row({{L.q(s, i, j, t), 1.0}, {L.l(s, i, j, t), -1.0}},
                               Relation::LessEqual, 0.0);
                    ++fc.q_le_l;
                }
    return built;
}

NetworkDesign design_from_milp_point(const ModelContext& ctx, const MilpLayout& L,
                                     const std::vector<double>& primal) {
    NetworkDesign d;
    d.open = Grid2(L.H, L.T, 0.0);
    d.carryover = Grid2(L.H, L.T, 0.0);
    d.links.assign(L.S, Grid3(L.H, L.H, L.T, 0.0));
    for (int i = 0; i < L.H; ++i)
        for (int t = 0; t < L.T; ++t) {
            d.open(i, t) = std::round(primal[L.z(i, t)]);
            d.carryover(i, t) = std::round(primal[L.v(i, t)]);
        }
    for (int s = 0; s < L.S; ++s)
        for (int i = 0; i < L.H; ++i)
            for (int j = 0; j < L.H; ++j)
                for (int t = 0; t < L.T; ++t) d.links[s](i, j, t) = primal[L.x(s, i, j, t)];
    d.regret = primal[L.gamma_id] / (ctx.scale.sigma1 * ctx.scale.sigma2);
    return d;
}

// ---- evaluators ----------------------------------------------------------------

std::pair<double, double> chance_probability(const NetworkDesign& d, const ModelContext& ctx,
                                             int s) {
    const Instance& inst = ctx.instance;
    const Scenario& sc = inst.scenarios[s];
    const double p = sc.probability;
    double m1 = 0.0, q = 0.0;
    for (int i = 0; i < inst.n_nodes; ++i)
        for (int t = 0; t < inst.n_periods; ++t) {
            const double prev = t == 0 ? 0.0 : d.open(i, t - 1);
            m1 += p * sc.node_risk_free(i, t) * (1.0 - prev) * d.open(i, t);
            for (int j = 0; j < inst.n_nodes; ++j)
                q += p * sc.link_risk_free(i, j, t) * d.links[s](i, j, t);
        }
    const double a1 = (sc.node_threshold - m1) / ctx.scale.sigma1;
    const double a2 = (sc.link_threshold - q) / ctx.scale.sigma2;
    return {normal_cdf(a1), normal_cdf(a2)};
}

double risk_regret(const NetworkDesign& d, const ModelContext& ctx, int s) {
    const Instance& inst = ctx.instance;
    const Scenario& sc = inst.scenarios[s];
    const double p = sc.probability;
    double m1 = 0.0, q = 0.0;
    for (int i = 0; i < inst.n_nodes; ++i)
        for (int t = 0; t < inst.n_periods; ++t) {
            const double prev = t == 0 ? 0.0 : d.open(i, t - 1);
            m1 += p * sc.node_risk_free(i, t) * (1.0 - prev) * d.open(i, t);
            for (int j = 0; j < inst.n_nodes; ++j)
                q += p * sc.link_risk_free(i, j, t) * d.links[s](i, j, t);
        }
    const double a1 = (sc.node_threshold - m1) / ctx.scale.sigma1;
    const double a2 = (sc.link_threshold - q) / ctx.scale.sigma2;
    return a1 * a2 - ctx.best.psi_star[s];
}

double design_cost(const NetworkDesign& d, const Instance& inst) {
    double cost = 0.0;
    for (int i = 0; i < inst.n_nodes; ++i)
        for (int t = 0; t < inst.n_periods; ++t)
            cost += inst.fixed_cost(i, t) * (d.open(i, t) - d.carryover(i, t));
    for (int s = 0; s < inst.n_scenarios(); ++s) {
        const Scenario& sc = inst.scenarios[s];
        for (int i = 0; i < inst.n_nodes; ++i)
            for (int j = 0; j < inst.n_nodes; ++j)
                for (int t = 0; t < inst.n_periods; ++t)
                    cost += sc.probability * sc.flow(i, t) * sc.unit_cost(i, j, t) *
                            d.links[s](i, j, t);
    }
    return cost;
}

double design_regret_linearized_raw(const NetworkDesign& d, const Instance& inst,
                                    const BestRisk& best, int s) {
    const Scenario& sc = inst.scenarios[s];
    const double p = sc.probability;
    double m1 = 0.0, q = 0.0, cross = 0.0;
    for (int i = 0; i < inst.n_nodes; ++i)
        for (int t = 0; t < inst.n_periods; ++t) {
            m1 += p * sc.node_risk_free(i, t) * (d.open(i, t) - d.carryover(i, t));
            for (int j = 0; j < inst.n_nodes; ++j) {
                const double x = d.links[s](i, j, t);
                q += p * sc.link_risk_free(i, j, t) * x;
                cross += p * sc.link_risk_free(i, j, t) * sc.node_risk_free(i, t) *
                         (d.open(i, t) - d.carryover(i, t)) * x;
            }
        }
    return sc.node_threshold * sc.link_threshold - sc.node_threshold * q -
           sc.link_threshold * m1 + cross - best.psi_raw[s];
}

double evaluate_objective(const NetworkDesign& d, const ModelContext& ctx) {
    const double gamma_raw = d.regret * ctx.scale.sigma1 * ctx.scale.sigma2;
    return ctx.theta1_coef() * (gamma_raw - ctx.gamma_star_raw()) +
           ctx.theta2_coef() * (design_cost(d, ctx.instance) - ctx.bounds.omega_star);
}

// ---- structured exact solver -----------------------------------------------

namespace {

struct LeafEdge {
    double rate;   // cost per unit of risk reduction
    double drho;
    int t;
    int seg;       // hull segment index (moving toward lower rho)
    int s;
};

struct LeafResult {
    double value = kInf;
    double gamma_raw = 0.0;
    double flow_cost = 0.0;
    // chosen hull position per (s,t): index of the hull point, plus an
    // optional fractional mix toward the next-lower-rho point
    std::vector<int> pos;      // s*T+t -> hull point index
    std::vector<double> mix;   // fraction moved toward pos-1 on the edge
};

struct PatternEval {
    const Instance* inst;
    const ExactTables* tb;
    const std::vector<double>* psi_raw;
    double wg, wc;
    bool risk_on;

    // scratch
    std::vector<const Hull*> hull_ref;   // per (s,t)
    std::vector<double> r0;              // per s: risk at the cheapest routing
    std::vector<double> rfloor;          // per s: minimum achievable risk
    std::vector<LeafEdge> edges;

    void evaluate(const std::vector<int>& cur, const std::vector<int>& fresh, double setup,
                  LeafResult& out) {
        const int T = tb->T, S = tb->S;
        hull_ref.resize(static_cast<size_t>(S) * T);
        out.pos.assign(static_cast<size_t>(S) * T, 0);
        out.mix.assign(static_cast<size_t>(S) * T, 0.0);

        double base_cost = 0.0;
        r0.assign(S, 0.0);
        rfloor.assign(S, 0.0);
        for (int s = 0; s < S; ++s) {
            const Scenario& sc = inst->scenarios[s];
            double risk_const = sc.node_threshold * sc.link_threshold - (*psi_raw)[s];
            for (int t = 0; t < T; ++t) {
                const Hull& h = tb->hull(s, t, cur[t], fresh[t]);
                hull_ref[s * T + t] = &h;
                base_cost += h.pts.back().cost;
                out.pos[s * T + t] = static_cast<int>(h.pts.size()) - 1;
                r0[s] += h.pts.back().rho;
                rfloor[s] += h.pts.front().rho;
                risk_const -= sc.link_threshold * tb->at(tb->m1_new, s, t, fresh[t]);
            }
            r0[s] += risk_const;
            rfloor[s] += risk_const;
        }

        if (!risk_on) {
            out.value = wc * (setup + base_cost);
            out.gamma_raw = 0.0;
            out.flow_cost = base_cost;
            return;
        }

        double g0 = 0.0;
        for (int s = 0; s < S; ++s) g0 = std::max(g0, r0[s]);
        double gfloor = 0.0;
        for (int s = 0; s < S; ++s) gfloor = std::max(gfloor, rfloor[s]);

        out.value = wg * g0 + wc * (setup + base_cost);
        out.gamma_raw = g0;
        out.flow_cost = base_cost;
        if (wg <= 0.0 || g0 <= gfloor + 1e-15) return;

        // Build the per-scenario edge lists (cheapest risk reductions first)
        // and sweep the regret level downward; the objective is convex in the
        // level, so stop at the first non-improving event.
        edges.clear();
        for (int s = 0; s < S; ++s) {
            for (int t = 0; t < T; ++t) {
                const Hull& h = *hull_ref[s * T + t];
                for (int k = static_cast<int>(h.pts.size()) - 1; k >= 1; --k) {
                    LeafEdge e;
                    e.drho = h.pts[k].rho - h.pts[k - 1].rho;
                    const double dcost = h.pts[k - 1].cost - h.pts[k].cost;
                    e.rate = e.drho > 0 ? dcost / e.drho : kInf;
                    e.t = t;
                    e.seg = k;
                    e.s = s;
                    if (e.drho > 1e-15 && std::isfinite(e.rate)) edges.push_back(e);
                }
            }
        }
        // per scenario: sort its edges by rate ascending
        std::stable_sort(edges.begin(), edges.end(), [](const LeafEdge& a, const LeafEdge& b) {
            if (a.s != b.s) return a.s < b.s;
            if (a.rate != b.rate) return a.rate < b.rate;
            if (a.t != b.t) return a.t < b.t;
            return a.seg > b.seg;
        });

        // Event sweep: level g goes from g0 down; scenario s starts paying at
        // level r_s(current) with its cheapest remaining edge.
        struct Cursor {
            size_t begin = 0, end = 0;  // edge range of this scenario
            size_t k = 0;               // next edge
            double level = 0.0;         // current risk of the scenario
        };
        std::vector<Cursor> cs(S);
        {
            size_t k = 0;
            for (int s = 0; s < S; ++s) {
                cs[s].begin = k;
                while (k < edges.size() && edges[k].s == s) ++k;
                cs[s].end = k;
                cs[s].k = cs[s].begin;
                cs[s].level = r0[s];
            }
        }

        // Remaining capacity of each scenario's current edge.
        std::vector<double> rem(S, 0.0);
        for (int s = 0; s < S; ++s)
            rem[s] = cs[s].k < cs[s].end ? edges[cs[s].k].drho : 0.0;

        double g = g0;
        double cost = base_cost;
        double best_val = out.value;
        double best_g = g0;
        // Sweep the regret level downward. Scenarios at level == g are
        // "binding" and pay their current edge rate per unit of descent; a
        // scenario joins when g crosses its level. The objective is convex in
        // g, so the first non-improving slope ends the sweep.
        const int max_events = static_cast<int>(edges.size()) + 2 * S + 4;
        for (int guard = 0; guard < max_events && g > gfloor + 1e-15; ++guard) {
            double slope = 0.0;
            double next_event = gfloor;
            bool stuck = false;
            for (int s = 0; s < S; ++s) {
                if (cs[s].level < g - 1e-12) {
                    next_event = std::max(next_event, cs[s].level);  // joins later
                    continue;
                }
                if (cs[s].k >= cs[s].end) {
                    stuck = true;  // this scenario is at its floor
                    break;
                }
                slope += edges[cs[s].k].rate;
                next_event = std::max(next_event, cs[s].level - rem[s]);
            }
            if (stuck) break;
            if (wc * slope >= wg - 1e-15) break;  // convexity: done improving
            const double step = g - next_event;
            if (step <= 1e-15) {
                // zero-length segment: advance exhausted cursors
                for (int s = 0; s < S; ++s) {
                    if (cs[s].level >= g - 1e-12 && cs[s].k < cs[s].end && rem[s] <= 1e-15) {
                        ++cs[s].k;
                        rem[s] = cs[s].k < cs[s].end ? edges[cs[s].k].drho : 0.0;
                    }
                }
                g = next_event;
                continue;
            }
            for (int s = 0; s < S; ++s) {
                if (cs[s].level < g - 1e-12) continue;  // not binding
                cost += edges[cs[s].k].rate * step;
                cs[s].level -= step;
                rem[s] -= step;
                if (rem[s] <= 1e-15) {
                    ++cs[s].k;
                    rem[s] = cs[s].k < cs[s].end ? edges[cs[s].k].drho : 0.0;
                }
            }
            g = next_event;
            const double val = wg * g + wc * (setup + cost);
            if (val < best_val - 1e-15) {
                best_val = val;
                best_g = g;
            }
        }

        if (best_val < out.value) {
            out.value = best_val;
            out.gamma_raw = best_g;
            // reconstruct hull positions by replaying each scenario to best_g
            double final_cost = base_cost;
            for (int s = 0; s < S; ++s) {
                double level = r0[s];
                size_t k = cs[s].begin;
                while (level > best_g + 1e-15 && k < cs[s].end) {
                    const LeafEdge& e = edges[k];
                    const double used = std::min(level - best_g, e.drho);
                    level -= used;
                    final_cost += e.rate * used;
                    const int idx = s * T + e.t;
                    if (used >= e.drho - 1e-15) {
                        out.pos[idx] = e.seg - 1;
                        out.mix[idx] = 0.0;
                        ++k;
                    } else {
                        out.pos[idx] = e.seg;
                        out.mix[idx] = used / e.drho;
                        break;
                    }
                }
            }
            out.flow_cost = final_cost;
        }
    }
};

}  // namespace

ModelContext make_context(const Instance& inst) {
    inst.validate();
    ModelContext ctx;
    ctx.instance = inst;
    ctx.scale = compute_risk_scale(inst);
    auto tables = build_tables(inst);
    ctx.tables = tables;
    ctx.best.psi_raw = best_risk_raw_all(inst, *tables);
    ctx.best.psi_star.resize(ctx.best.psi_raw.size());
    const double ss = ctx.scale.sigma1 * ctx.scale.sigma2;
    for (size_t s = 0; s < ctx.best.psi_raw.size(); ++s)
        ctx.best.psi_star[s] = ctx.best.psi_raw[s] / ss;
    ctx.bounds = estimate_scaling_bounds(inst, ctx.scale, ctx.best);
    ctx.gamma_cap_raw = gamma_cap_from(inst, ctx.best);
    return ctx;
}

namespace {

struct RawSolveResult {
    double value = kInf;
    double gamma_raw = 0.0;
    double cost = 0.0;
    std::vector<int> cur, fresh;
    LeafResult leaf;
    long patterns = 0;
    bool complete = true;
};

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Depth-first enumeration over period open-mask tuples with additive pruning.
RawSolveResult solve_weighted_raw(const Instance& inst, const ExactTables& tb,
                                  const std::vector<double>& psi_raw, double wg, double wc,
                                  bool risk_on, const Grid2* fixed_open,
                                  const Grid2* fixed_carry, double budget_s) {
    const int H = inst.n_nodes, T = inst.n_periods;
    const int M = 1 << H;
    RawSolveResult best;
    best.complete = true;
    const double t_end = now_seconds() + budget_s;

    std::vector<int> cur(T, 0), fresh(T, 0);
    std::vector<int> fixed_mask(T, -1), fixed_vmask(T, -1);
    if (fixed_open) {
        for (int t = 0; t < T; ++t) {
            int m = 0;
            for (int i = 0; i < H; ++i)
                if ((*fixed_open)(i, t) > 0.5) m |= 1 << i;
            fixed_mask[t] = m;
        }
    }
    if (fixed_carry) {
        for (int t = 0; t < T; ++t) {
            int m = 0;
            for (int i = 0; i < H; ++i)
                if ((*fixed_carry)(i, t) > 0.5) m |= 1 << i;
            fixed_vmask[t] = m;
        }
    }

    // optimistic additive tail: flow cost only (setup and regret are >= 0)
    std::vector<double> suffix(T + 1, 0.0);
    for (int t = T - 1; t >= 0; --t) suffix[t] = suffix[t + 1] + tb.sum_minc_best[t];

    PatternEval eval;
    eval.inst = &inst;
    eval.tb = &tb;
    eval.psi_raw = &psi_raw;
    eval.wg = wg;
    eval.wc = wc;
    eval.risk_on = risk_on;
    LeafResult leaf;

    long since_check = 0;
    std::function<void(int, int, double)> rec = [&](int t, int prev, double part_cost) {
        if (t == T) {
            ++best.patterns;
            double setup = 0.0;
            for (int tt = 0; tt < T; ++tt)
                setup += tb.setup_new[(static_cast<size_t>(tt) << H) | fresh[tt]];
            eval.evaluate(cur, fresh, setup, leaf);
            if (leaf.value < best.value - 1e-15) {
                best.value = leaf.value;
                best.gamma_raw = leaf.gamma_raw;
                best.cost = setup + leaf.flow_cost;
                best.cur = cur;
                best.fresh = fresh;
                best.leaf = leaf;
            }
            return;
        }
        if (!best.complete) return;
        if (++since_check > 2048) {
            since_check = 0;
            if (now_seconds() > t_end) {
                best.complete = false;
                return;
            }
        }
        const int lo = fixed_mask[t] >= 0 ? fixed_mask[t] : 1;
        const int hi = fixed_mask[t] >= 0 ? fixed_mask[t] : M - 1;
        for (int m = lo; m <= hi; ++m) {
            if (!best.complete) return;
            if (m == 0) continue;
            if (fixed_vmask[t] >= 0 && (m & prev) != fixed_vmask[t]) continue;
            cur[t] = m;
            fresh[t] = m & ~prev;
            double add = 0.0;
            for (int s = 0; s < tb.S; ++s) add += tb.at(tb.minc, s, t, m);
            const double lb =
                wc * (part_cost + tb.setup_new[(static_cast<size_t>(t) << H) | fresh[t]] + add +
                      suffix[t + 1]);
            if (lb >= best.value - 1e-15) continue;
            rec(t + 1, m,
                part_cost + tb.setup_new[(static_cast<size_t>(t) << H) | fresh[t]] + add);
        }
    };
    rec(0, 0, 0.0);
    return best;
}

NetworkDesign design_from_raw(const Instance& inst, const ExactTables& tb,
                              const RawSolveResult& raw, double sigma12) {
    const int H = inst.n_nodes, T = inst.n_periods, S = inst.n_scenarios();
    NetworkDesign d;
    d.open = Grid2(H, T, 0.0);
    d.carryover = Grid2(H, T, 0.0);
    d.links.assign(S, Grid3(H, H, T, 0.0));
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < H; ++i) {
            if (raw.cur[t] >> i & 1) d.open(i, t) = 1.0;
            const bool prev_open = t > 0 && (raw.cur[t - 1] >> i & 1);
            if ((raw.cur[t] >> i & 1) && prev_open) d.carryover(i, t) = 1.0;
        }
    for (int s = 0; s < S; ++s)
        for (int t = 0; t < T; ++t) {
            const Hull& h = tb.hull(s, t, raw.cur[t], raw.fresh[t]);
            const int idx = s * T + t;
            const int pos = raw.leaf.pos.empty() ? static_cast<int>(h.pts.size()) - 1
                                                 : raw.leaf.pos[idx];
            const double mix = raw.leaf.mix.empty() ? 0.0 : raw.leaf.mix[idx];
            const HullPoint& a = h.pts[pos];
            if (mix > 1e-15 && pos >= 1) {
                const HullPoint& b = h.pts[pos - 1];
                d.links[s](a.i, a.j, t) = 1.0 - mix;
                d.links[s](b.i, b.j, t) += mix;
            } else {
                d.links[s](a.i, a.j, t) = 1.0;
            }
        }
    d.regret = raw.gamma_raw / sigma12;
    return d;
}

}  // namespace

ModelContext make_context_with_scaling(const Instance& inst, double gamma_star_raw,
                                       double gamma_max_raw, double omega_star,
                                       double omega_max) {
    inst.validate();
    ModelContext ctx;
    ctx.instance = inst;
    ctx.scale = compute_risk_scale(inst);
    auto tables = build_tables(inst);
    ctx.tables = tables;
    ctx.best.psi_raw = best_risk_raw_all(inst, *tables);
    ctx.best.psi_star.resize(ctx.best.psi_raw.size());
    const double ss = ctx.scale.sigma1 * ctx.scale.sigma2;
    for (size_t s = 0; s < ctx.best.psi_raw.size(); ++s)
        ctx.best.psi_star[s] = ctx.best.psi_raw[s] / ss;
    ctx.bounds.gamma_star = gamma_star_raw / ss;
    ctx.bounds.gamma_max = gamma_max_raw / ss;
    ctx.bounds.omega_star = omega_star;
    ctx.bounds.omega_max = omega_max;
    ctx.gamma_cap_raw = std::max(gamma_cap_from(inst, ctx.best), gamma_max_raw);
    return ctx;
}

ScalingBounds estimate_scaling_bounds(const Instance& inst, const RiskScale& scale,
                                      const BestRisk& best) {
    auto tables = build_tables(inst);
    // ideal points by single-objective solves, nadir from the payoff table
    auto risk_solve =
        solve_weighted_raw(inst, *tables, best.psi_raw, 1.0, 0.0, true, nullptr, nullptr, kInf);
    auto cost_solve =
        solve_weighted_raw(inst, *tables, best.psi_raw, 0.0, 1.0, true, nullptr, nullptr, kInf);
    const double ss = scale.sigma1 * scale.sigma2;
    ScalingBounds b;
    b.gamma_star = risk_solve.gamma_raw / ss;
    b.omega_max = risk_solve.cost;
    b.omega_star = cost_solve.cost;
    b.gamma_max = cost_solve.gamma_raw / ss;
    if (b.gamma_max <= b.gamma_star)
        b.gamma_max = b.gamma_star + 1e-6 * (1.0 + std::abs(b.gamma_star));
    if (b.omega_max <= b.omega_star)
        b.omega_max = b.omega_star + 1e-6 * (1.0 + std::abs(b.omega_star));
    return b;
}

ExactResult solve_exact(const ModelContext& ctx, const ExactOptions& opts) {
    const Instance& inst = ctx.instance;
    const double theta1 = opts.theta_override ? opts.theta_override->first : inst.theta1;
    const double theta2 = opts.theta_override ? opts.theta_override->second : inst.theta2;
    const double wg = opts.risk_rows
                          ? theta1 / (ctx.gamma_max_raw() - ctx.gamma_star_raw())
                          : 0.0;
    const double wc = theta2 / (ctx.bounds.omega_max - ctx.bounds.omega_star);

    if (opts.fixed_open) {
        for (int t = 0; t < inst.n_periods; ++t) {
            bool any = false;
            for (int i = 0; i < inst.n_nodes; ++i)
                if ((*opts.fixed_open)(i, t) > 0.5) any = true;
            if (!any)
                throw InfeasibleScenario("fixed first stage opens no hub in period " +
                                         std::to_string(t));
        }
    }

    auto raw = solve_weighted_raw(inst, *ctx.tables, ctx.best.psi_raw, wg, wc,
                                  opts.risk_rows, opts.fixed_open, opts.fixed_carryover,
                                  opts.time_budget_s);
    ExactResult res;
    res.patterns_evaluated = raw.patterns;
    res.proven_optimal = raw.complete;
    if (!std::isfinite(raw.value)) {
        throw InfeasibleScenario("no feasible hub pattern under the given fixings");
    }
    res.design = design_from_raw(inst, *ctx.tables, raw, ctx.scale.sigma1 * ctx.scale.sigma2);
    res.objective = wg * (raw.gamma_raw - (opts.risk_rows ? ctx.gamma_star_raw() : 0.0)) +
                    wc * (raw.cost - ctx.bounds.omega_star);
    return res;
}

double second_stage_value(const ModelContext& ctx, const Grid2& open, const Grid2& carryover,
                          int s) {
    // the scenario becomes a probability-one singleton; scaling stays shared
    Instance single = ctx.instance;
    single.scenarios = {ctx.instance.scenarios[s]};
    single.scenarios[0].probability = 1.0;

    for (int t = 0; t < single.n_periods; ++t) {
        bool any = false;
        for (int i = 0; i < single.n_nodes; ++i)
            if (open(i, t) > 0.5) any = true;
        if (!any)
            throw InfeasibleScenario("second stage has no open hub in period " +
                                     std::to_string(t));
    }

    auto tables = build_tables(single);
    auto psi = best_risk_raw_all(single, *tables);
    ModelContext sub;
    sub.instance = single;
    sub.scale = ctx.scale;
    sub.best.psi_raw = psi;
    sub.best.psi_star.resize(1);
    sub.best.psi_star[0] = psi[0] / (ctx.scale.sigma1 * ctx.scale.sigma2);
    sub.bounds = ctx.bounds;
    sub.gamma_cap_raw = ctx.gamma_cap_raw;
    sub.tables = tables;

    ExactOptions opts;
    opts.fixed_open = &open;
    opts.fixed_carryover = &carryover;
    auto res = solve_exact(sub, opts);
    return res.objective;
}

}  // namespace prhr
