#include "prhr/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>
#include <ostream>

namespace prhr {

int LinearProgram::add_variable(double lb, double ub, double obj, std::string name) {
    objective.push_back(obj);
    lower.push_back(lb);
    upper.push_back(ub);
    if (!name.empty() || !var_names.empty()) {
        var_names.resize(objective.size());
        var_names.back() = std::move(name);
    }
    return num_vars() - 1;
}

int LinearProgram::add_row(std::vector<std::pair<int, double>> terms, Relation rel, double rhs) {
    rows.push_back(LpRow{std::move(terms), rel, rhs});
    return num_rows() - 1;
}

void LinearProgram::validate() const {
    const int n = num_vars();
    for (int j = 0; j < n; ++j) {
        if (!(lower[j] <= upper[j]))
            throw std::invalid_argument("variable " + std::to_string(j) + " has lower > upper");
    }
    for (size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].terms.empty())
            throw std::invalid_argument("constraint " + std::to_string(r) + " is empty");
        for (auto& [id, coef] : rows[r].terms) {
            if (id < 0 || id >= n)
                throw std::invalid_argument("constraint " + std::to_string(r) +
                                            " references unknown variable " + std::to_string(id));
            (void)coef;
        }
    }
}

void dump_lp(const LinearProgram& lp, std::ostream& os) {
    auto vname = [&](int j) {
        if (j < static_cast<int>(lp.var_names.size()) && !lp.var_names[j].empty())
            return lp.var_names[j];
        return "x" + std::to_string(j);
    };
    os << (lp.sense == Sense::Minimize ? "min" : "max");
    for (int j = 0; j < lp.num_vars(); ++j) {
        if (lp.objective[j] == 0.0) continue;
        os << " + " << lp.objective[j] << "*" << vname(j);
    }
    if (lp.objective_offset != 0.0) os << " + " << lp.objective_offset;
    os << "\n";
    for (const auto& row : lp.rows) {
        bool first = true;
        for (auto& [id, coef] : row.terms) {
            if (!first) os << " + ";
            os << coef << "*" << vname(id);
            first = false;
        }
        const char* rel = row.rel == Relation::LessEqual  ? "<="
                          : row.rel == Relation::Equal    ? "="
                                                          : ">=";
        os << " " << rel << " " << row.rhs << "\n";
    }
    for (int j = 0; j < lp.num_vars(); ++j) {
        os << lp.lower[j] << " <= " << vname(j) << " <= " << lp.upper[j] << "\n";
    }
}

namespace {
enum VarState : int8_t { kAtLower = 0, kAtUpper = 1, kBasic = 2, kFreeZero = 3 };

struct SparseCol {
    std::vector<std::pair<int, double>> entries;  // (row, coef)
};
}  // namespace

// Bounded-variable simplex over the equality form A x + s = b, one slack per
// row with bounds encoding the relation. Dense explicit basis inverse stored
// column-major: binv[r * m + k] = (B^-1)(k, r).
struct LpSolver::Impl {
    SimplexOptions opts;

    int m = 0;
    int nstruct = 0;
    int ncols = 0;  // structurals + slacks + appended artificials
    bool maximize = false;
    double obj_offset = 0.0;

    std::vector<SparseCol> cols;
    std::vector<double> lb, ub, cost;
    std::vector<double> b;
    std::vector<Relation> rel;
    std::vector<uint64_t> row_hash;

    std::vector<int> basic;
    std::vector<int8_t> st;
    std::vector<double> binv;
    std::vector<double> xb;
    bool has_basis = false;
    bool artificial_basic = false;
    long total_iters = 0;

    std::vector<double> w, y, dc, rowp;

    static uint64_t hash_row(const LpRow& row) {
        uint64_t h = 0xcbf29ce484222325ull;
        auto put = [&h](uint64_t v) {
            h ^= v;
            h *= 0x100000001b3ull;
        };
        put(static_cast<uint64_t>(row.rel));
        uint64_t bits;
        std::memcpy(&bits, &row.rhs, 8);
        put(bits);
        for (auto& [id, coef] : row.terms) {
            put(static_cast<uint64_t>(id));
            std::memcpy(&bits, &coef, 8);
            put(bits);
        }
        return h;
    }

    void load(const LinearProgram& lp) {
        lp.validate();
        const int new_m = lp.num_rows();
        const int new_n = lp.num_vars();

        std::vector<uint64_t> new_hash(new_m);
        for (int i = 0; i < new_m; ++i) new_hash[i] = hash_row(lp.rows[i]);

        bool warm = has_basis && !artificial_basic && new_n == nstruct && new_m >= m;
        if (warm)
            for (int i = 0; i < m && warm; ++i) warm = new_hash[i] == row_hash[i];

        maximize = lp.sense == Sense::Maximize;
        obj_offset = lp.objective_offset;

        if (!warm) {
            has_basis = false;
            artificial_basic = false;
            m = new_m;
            nstruct = new_n;
            ncols = nstruct + m;
            cols.assign(ncols, {});
            lb.assign(ncols, 0.0);
            ub.assign(ncols, 0.0);
            cost.assign(ncols, 0.0);
            b.assign(m, 0.0);
            rel.assign(m, Relation::LessEqual);
            row_hash = new_hash;
            fill_columns(lp, 0);
            for (int j = 0; j < nstruct; ++j) {
                lb[j] = lp.lower[j];
                ub[j] = lp.upper[j];
            }
            set_costs(lp);
            return;
        }

        drop_artificial_columns();
        if (new_m > m) append_rows(lp, new_hash);
        for (int j = 0; j < nstruct; ++j) {
            lb[j] = lp.lower[j];
            ub[j] = lp.upper[j];
        }
        set_costs(lp);
    }

    // Artificials are only kept while they sit in the basis; loads are forced
    // cold in that case, so dropping the tail columns here is always safe.
    void drop_artificial_columns() {
        const int keep = nstruct + m;
        if (ncols == keep) return;
        cols.resize(keep);
        lb.resize(keep);
        ub.resize(keep);
        cost.resize(keep);
        st.resize(keep);
        ncols = keep;
    }

    void set_costs(const LinearProgram& lp) {
        const double sgn = maximize ? -1.0 : 1.0;
        for (int j = 0; j < nstruct; ++j) cost[j] = sgn * lp.objective[j];
        for (int j = nstruct; j < ncols; ++j) cost[j] = 0.0;
    }

    void fill_columns(const LinearProgram& lp, int first_row) {
        for (int i = first_row; i < static_cast<int>(lp.rows.size()); ++i) {
            const auto& row = lp.rows[i];
            for (auto& [id, coef] : row.terms)
                if (coef != 0.0) cols[id].entries.push_back({i, coef});
            b[i] = row.rhs;
            rel[i] = row.rel;
            const int sj = nstruct + i;
            cols[sj].entries = {{i, 1.0}};
            switch (row.rel) {
                case Relation::LessEqual:
                    lb[sj] = 0.0;
                    ub[sj] = kInf;
                    break;
                case Relation::GreaterEqual:
                    lb[sj] = -kInf;
                    ub[sj] = 0.0;
                    break;
                case Relation::Equal: lb[sj] = ub[sj] = 0.0; break;
            }
        }
    }

    void append_rows(const LinearProgram& lp, const std::vector<uint64_t>& new_hash) {
        const int old_m = m;
        const int new_m = lp.num_rows();
        m = new_m;
        b.resize(m);
        rel.resize(m);
        row_hash = new_hash;

        // Shift slack columns so structural indices stay stable: slacks occupy
        // [nstruct, nstruct+m). Old slack i keeps its index.
        cols.resize(nstruct + m);
        lb.resize(nstruct + m);
        ub.resize(nstruct + m);
        cost.resize(nstruct + m, 0.0);
        st.resize(nstruct + m, kAtLower);
        ncols = nstruct + m;
        fill_columns(lp, old_m);

        // Extend B^-1: [[B,0],[R,I]]^-1 = [[B^-1,0],[-R B^-1, I]].
        std::vector<double> nb(static_cast<size_t>(m) * m, 0.0);
        for (int c = 0; c < old_m; ++c)
            std::memcpy(&nb[static_cast<size_t>(c) * m], &binv[static_cast<size_t>(c) * old_m],
                        sizeof(double) * old_m);
        for (int i = old_m; i < m; ++i) nb[static_cast<size_t>(i) * m + i] = 1.0;
        for (int k = 0; k < old_m; ++k) {
            const int j = basic[k];
            for (auto& [r, a] : cols[j].entries) {
                if (r < old_m) continue;
                for (int c = 0; c < old_m; ++c)
                    nb[static_cast<size_t>(c) * m + r] -=
                        a * binv[static_cast<size_t>(c) * old_m + k];
            }
        }
        binv.swap(nb);
        basic.resize(m);
        xb.resize(m);
        for (int i = old_m; i < m; ++i) {
            basic[i] = nstruct + i;
            st[nstruct + i] = kBasic;
        }
    }

    void set_bounds(int var, double lo, double hi) {
        lb[var] = lo;
        ub[var] = hi;
    }

    void set_objective_coef(int var, double coef) { cost[var] = maximize ? -coef : coef; }

    // ---- linear algebra ----

    void ftran(const SparseCol& col, std::vector<double>& out) const {
        out.resize(m);
        std::fill(out.begin(), out.end(), 0.0);
        for (auto& [r, a] : col.entries) {
            const double* bc = &binv[static_cast<size_t>(r) * m];
            for (int k = 0; k < m; ++k) out[k] += a * bc[k];
        }
    }

    void btran_costs(std::vector<double>& out) {
        out.assign(m, 0.0);
        for (int r = 0; r < m; ++r) {
            const double* bc = &binv[static_cast<size_t>(r) * m];
            double acc = 0.0;
            for (int k = 0; k < m; ++k) {
                const double cb = cost[basic[k]];
                if (cb != 0.0) acc += cb * bc[k];
            }
            out[r] = acc;
        }
    }

    void binv_row(int p, std::vector<double>& out) const {
        out.resize(m);
        for (int r = 0; r < m; ++r) out[r] = binv[static_cast<size_t>(r) * m + p];
    }

    double col_dot(const SparseCol& col, const std::vector<double>& vec) const {
        double acc = 0.0;
        for (auto& [r, a] : col.entries) acc += a * vec[r];
        return acc;
    }

    double nonbasic_value(int j) const {
        switch (st[j]) {
            case kAtLower: return lb[j];
            case kAtUpper: return ub[j];
            default: return 0.0;
        }
    }

    void compute_xb() {
        std::vector<double> rhs(b);
        for (int j = 0; j < ncols; ++j) {
            if (st[j] == kBasic) continue;
            const double v = nonbasic_value(j);
            if (v == 0.0) continue;
            for (auto& [r, a] : cols[j].entries) rhs[r] -= a * v;
        }
        xb.assign(m, 0.0);
        for (int r = 0; r < m; ++r) {
            const double v = rhs[r];
            if (v == 0.0) continue;
            const double* bc = &binv[static_cast<size_t>(r) * m];
            for (int k = 0; k < m; ++k) xb[k] += v * bc[k];
        }
    }

    void pivot_update(int p, const std::vector<double>& wcol) {
        const double ipv = 1.0 / wcol[p];
        for (int r = 0; r < m; ++r) {
            double* bc = &binv[static_cast<size_t>(r) * m];
            const double bp = bc[p] * ipv;
            if (bp == 0.0) continue;
            for (int k = 0; k < m; ++k) bc[k] -= wcol[k] * bp;
            bc[p] = bp;
        }
    }

    void compute_duals_and_dc() {
        btran_costs(y);
        dc.assign(ncols, 0.0);
        for (int j = 0; j < ncols; ++j) {
            if (st[j] == kBasic) continue;
            dc[j] = cost[j] - col_dot(cols[j], y);
        }
    }

    double primal_objective() const {
        double obj = 0.0;
        for (int k = 0; k < m; ++k) obj += cost[basic[k]] * xb[k];
        for (int j = 0; j < ncols; ++j)
            if (st[j] != kBasic && cost[j] != 0.0) obj += cost[j] * nonbasic_value(j);
        return obj;
    }

    bool primal_feasible_basis(double slack_mult = 1.0) const {
        const double tol = opts.feas_tol * slack_mult;
        for (int k = 0; k < m; ++k) {
            const int bj = basic[k];
            if (xb[k] < lb[bj] - tol || xb[k] > ub[bj] + tol) return false;
        }
        return true;
    }

    // ---- primal simplex ----

    enum class LoopResult { Optimal, Unbounded, IterLimit, Breakdown };

    LoopResult primal_loop(bool phase1) {
        const double tol = opts.opt_tol;
        long stall = 0;
        const long bland_after = static_cast<long>(opts.bland_after_factor * (m + ncols)) + 10;
        bool bland = false;
        double last_obj = kInf;
        int tiny_pivots = 0;

        for (long iter = 0;; ++iter, ++total_iters) {
            if (total_iters > opts.max_iters) return LoopResult::IterLimit;
            compute_duals_and_dc();

            int enter = -1, dir = 0;
            if (!bland) {
                double best = tol;
                for (int j = 0; j < ncols; ++j) {
                    if (st[j] == kBasic || lb[j] == ub[j]) continue;
                    const double d = dc[j];
                    if ((st[j] == kAtLower || st[j] == kFreeZero) && -d > best) {
                        best = -d;
                        enter = j;
                        dir = +1;
                    } else if ((st[j] == kAtUpper || st[j] == kFreeZero) && d > best) {
                        best = d;
                        enter = j;
                        dir = -1;
                    }
                }
            } else {
                for (int j = 0; j < ncols && enter < 0; ++j) {
                    if (st[j] == kBasic || lb[j] == ub[j]) continue;
                    const double d = dc[j];
                    if ((st[j] == kAtLower || st[j] == kFreeZero) && d < -tol) {
                        enter = j;
                        dir = +1;
                    } else if ((st[j] == kAtUpper || st[j] == kFreeZero) && d > tol) {
                        enter = j;
                        dir = -1;
                    }
                }
            }
            if (enter < 0) {
                compute_xb();
                return LoopResult::Optimal;
            }

            ftran(cols[enter], w);

            // Bounded ratio test; rate(k) = -dir*w[k] is d(xb[k])/d(step).
            // Two passes: find the exact minimum ratio, then pick the best
            // pivot among near-ties so the basis stays well conditioned.
            const double piv_screen = 1e-10;
            const double flip_limit = ub[enter] - lb[enter];
            double rmin = flip_limit;
            for (int k = 0; k < m; ++k) {
                const double rate = -dir * w[k];
                if (std::abs(rate) <= piv_screen) continue;
                const int bj = basic[k];
                const double room = rate > 0 ? ub[bj] - xb[k] : xb[k] - lb[bj];
                if (!std::isfinite(room)) continue;
                rmin = std::min(rmin, std::max(room, 0.0) / std::abs(rate));
            }
            if (!std::isfinite(rmin)) {
                return phase1 ? LoopResult::Breakdown : LoopResult::Unbounded;
            }
            const double tie = 1e-9 * (1.0 + std::abs(rmin));
            int leave = -1;
            double best_piv = 0.0;
            double step = rmin;
            for (int k = 0; k < m; ++k) {
                const double rate = -dir * w[k];
                if (std::abs(rate) <= piv_screen) continue;
                const int bj = basic[k];
                const double room = rate > 0 ? ub[bj] - xb[k] : xb[k] - lb[bj];
                if (!std::isfinite(room)) continue;
                const double r = std::max(room, 0.0) / std::abs(rate);
                if (r > rmin + tie) continue;
                const bool better =
                    leave < 0 ||
                    (bland ? basic[k] < basic[leave]
                           : std::abs(w[k]) > std::abs(best_piv) + 1e-15 ||
                                 (std::abs(std::abs(w[k]) - std::abs(best_piv)) <= 1e-15 &&
                                  basic[k] < basic[leave]));
                if (better) {
                    leave = k;
                    best_piv = w[k];
                    step = std::min(r, rmin + tie);
                }
            }
            if (leave >= 0 && flip_limit < step) {
                leave = -1;  // own bound flip is strictly shorter
                step = flip_limit;
            }
            step = std::max(step, 0.0);
#ifdef PRHR_LP_TRACE
            std::fprintf(stderr, "phase%d enter=%d dir=%d step=%g leave=%d(col %d) piv=%g\n",
                         phase1 ? 1 : 2, enter, dir, step, leave, leave >= 0 ? basic[leave] : -1,
                         leave >= 0 ? w[leave] : 0.0);
#endif

            if (leave < 0) {
                st[enter] = dir > 0 ? kAtUpper : kAtLower;
                for (int k = 0; k < m; ++k) xb[k] -= dir * step * w[k];
            } else {
                if (std::abs(w[leave]) < opts.zero_pivot) {
                    if (++tiny_pivots > 8) return LoopResult::Breakdown;
                    bland = true;  // spec: Bland fallback before giving up
                    continue;
                }
                const int out = basic[leave];
                const double rate = -dir * w[leave];
                st[out] = rate > 0 ? kAtUpper : kAtLower;
                const double enter_val = nonbasic_value(enter) + dir * step;
                for (int k = 0; k < m; ++k) xb[k] -= dir * step * w[k];
                basic[leave] = enter;
                st[enter] = kBasic;
                pivot_update(leave, w);
                xb[leave] = enter_val;
            }

            const double obj = primal_objective();
            if (obj < last_obj - 1e-12 * (1.0 + std::abs(last_obj))) {
                stall = 0;
                last_obj = obj;
            } else if (++stall > bland_after) {
                bland = true;
            }
            if ((iter & 127) == 127) compute_xb();
        }
    }

    // ---- dual simplex ----

    bool dual_feasible() {
        compute_duals_and_dc();
        const double tol = opts.opt_tol * 10;
        for (int j = 0; j < ncols; ++j) {
            if (st[j] == kBasic || lb[j] == ub[j]) continue;
            if (st[j] == kAtLower && dc[j] < -tol) return false;
            if (st[j] == kAtUpper && dc[j] > tol) return false;
            if (st[j] == kFreeZero && std::abs(dc[j]) > tol) return false;
        }
        return true;
    }

    // Reassign nonbasic states so reduced-cost signs fit; legal whenever the
    // target bound is finite. Also evicts nonbasics parked on infinite bounds.
    void repair_nonbasic_states() {
        compute_duals_and_dc();
        const double tol = opts.opt_tol;
        for (int j = 0; j < ncols; ++j) {
            if (st[j] == kBasic) continue;
            if (st[j] == kAtLower && !std::isfinite(lb[j]))
                st[j] = std::isfinite(ub[j]) ? kAtUpper : kFreeZero;
            else if (st[j] == kAtUpper && !std::isfinite(ub[j]))
                st[j] = std::isfinite(lb[j]) ? kAtLower : kFreeZero;
            if (lb[j] == ub[j]) continue;
            if (st[j] == kAtLower && dc[j] < -tol && std::isfinite(ub[j]))
                st[j] = kAtUpper;
            else if (st[j] == kAtUpper && dc[j] > tol && std::isfinite(lb[j]))
                st[j] = kAtLower;
            else if (st[j] == kFreeZero && dc[j] > tol && std::isfinite(lb[j]))
                st[j] = kAtLower;
            else if (st[j] == kFreeZero && dc[j] < -tol && std::isfinite(ub[j]))
                st[j] = kAtUpper;
        }
        compute_xb();
    }

    enum class DualResult { PrimalFeasible, Infeasible, IterLimit, Stuck };

    DualResult dual_loop() {
        const double ftol = opts.feas_tol;
        for (long iter = 0;; ++iter, ++total_iters) {
            if (total_iters > opts.max_iters) return DualResult::IterLimit;

            int p = -1;
            double worst = ftol;
            bool below = false;
            for (int k = 0; k < m; ++k) {
                const int bj = basic[k];
                const double lo = lb[bj] - xb[k];
                const double hi = xb[k] - ub[bj];
                if (lo > worst) {
                    worst = lo;
                    p = k;
                    below = true;
                }
                if (hi > worst) {
                    worst = hi;
                    p = k;
                    below = false;
                }
            }
            if (p < 0) return DualResult::PrimalFeasible;

            binv_row(p, rowp);
            compute_duals_and_dc();

            int enter = -1;
            double best_ratio = kInf, best_alpha = 0.0;
            for (int j = 0; j < ncols; ++j) {
                if (st[j] == kBasic || lb[j] == ub[j]) continue;
                const double alpha = col_dot(cols[j], rowp);
                if (std::abs(alpha) <= 1e-10) continue;
                bool ok;
                if (below)
                    ok = ((st[j] == kAtLower || st[j] == kFreeZero) && alpha < 0) ||
                         ((st[j] == kAtUpper || st[j] == kFreeZero) && alpha > 0);
                else
                    ok = ((st[j] == kAtLower || st[j] == kFreeZero) && alpha > 0) ||
                         ((st[j] == kAtUpper || st[j] == kFreeZero) && alpha < 0);
                if (!ok) continue;
                const double ratio = std::abs(dc[j]) / std::abs(alpha);
                const bool better =
                    ratio < best_ratio - 1e-12 ||
                    (ratio <= best_ratio + 1e-12 &&
                     (enter < 0 || std::abs(alpha) > std::abs(best_alpha) + 1e-15 ||
                      (std::abs(std::abs(alpha) - std::abs(best_alpha)) <= 1e-15 && j < enter)));
                if (better) {
                    best_ratio = ratio;
                    enter = j;
                    best_alpha = alpha;
                }
            }
            if (enter < 0) return DualResult::Infeasible;

            ftran(cols[enter], w);
            if (std::abs(w[p]) < opts.zero_pivot) return DualResult::Stuck;

            const int out = basic[p];
            const double target = below ? lb[out] : ub[out];
            const double delta = (xb[p] - target) / w[p];  // entering movement
            st[out] = below ? kAtLower : kAtUpper;
            const double enter_val = nonbasic_value(enter) + delta;
            for (int k = 0; k < m; ++k) xb[k] -= delta * w[k];
            basic[p] = enter;
            st[enter] = kBasic;
            pivot_update(p, w);
            xb[p] = enter_val;
            if ((iter & 127) == 127) compute_xb();
        }
    }

    // ---- phase 1 ----

    void cold_basis() {
        st.assign(ncols, kAtLower);
        for (int j = 0; j < ncols; ++j) {
            if (std::isfinite(lb[j]))
                st[j] = kAtLower;
            else if (std::isfinite(ub[j]))
                st[j] = kAtUpper;
            else
                st[j] = kFreeZero;
        }
        basic.assign(m, -1);
        for (int i = 0; i < m; ++i) {
            basic[i] = nstruct + i;
            st[nstruct + i] = kBasic;
        }
        binv.assign(static_cast<size_t>(m) * m, 0.0);
        for (int i = 0; i < m; ++i) binv[static_cast<size_t>(i) * m + i] = 1.0;
        compute_xb();
        has_basis = true;
        artificial_basic = false;
    }

    struct Phase1Result {
        double value = 0.0;
        bool breakdown = false;
        std::vector<double> duals;  // set when infeasible
    };

    Phase1Result run_phase1() {
        Phase1Result res;
        drop_artificial_columns();
        cold_basis();
        std::vector<double> save_cost(cost);
        std::fill(cost.begin(), cost.end(), 0.0);

        const int base_cols = ncols;
        for (int i = 0; i < m; ++i) {
            const int sj = nstruct + i;
            const double v = xb[i];
            const double clamped = std::min(std::max(v, lb[sj]), ub[sj]);
            if (std::abs(v - clamped) <= opts.feas_tol) continue;
            st[sj] = (clamped == lb[sj]) ? kAtLower : kAtUpper;
            cols.push_back({});
            cols.back().entries = {{i, v - clamped > 0 ? 1.0 : -1.0}};
            lb.push_back(0.0);
            ub.push_back(kInf);
            cost.push_back(1.0);
            save_cost.push_back(0.0);
            st.push_back(kBasic);
            basic[i] = ncols;
            ++ncols;
        }
        if (ncols == base_cols) {
            cost = save_cost;
            compute_xb();
            return res;
        }
        // The start basis is slacks plus +-e_i artificials, so B is diagonal;
        // refresh the inverse for the -1 columns.
        for (int i = 0; i < m; ++i) {
            if (basic[i] < base_cols) continue;
            binv[static_cast<size_t>(i) * m + i] = cols[basic[i]].entries[0].second;
        }
        compute_xb();
        const LoopResult lr = primal_loop(/*phase1=*/true);
        if (lr == LoopResult::Breakdown || lr == LoopResult::IterLimit) {
            res.breakdown = true;
            cost = save_cost;
            return res;
        }
        double z1 = 0.0;
        for (int k = 0; k < m; ++k)
            if (basic[k] >= base_cols) z1 += std::max(0.0, xb[k]);
        res.value = z1;
        if (z1 > opts.feas_tol * 10) {
            btran_costs(res.duals);
            cost = save_cost;
            return res;
        }

        // Feasible: evict basic artificials where a replacement column exists.
        for (int k = 0; k < m; ++k) {
            if (basic[k] < base_cols) continue;
            binv_row(k, rowp);
            int repl = -1;
            double repl_alpha = 0.0;
            for (int j = 0; j < base_cols; ++j) {
                if (st[j] == kBasic) continue;
                const double alpha = col_dot(cols[j], rowp);
                if (std::abs(alpha) > 1e-7) {
                    repl = j;
                    repl_alpha = alpha;
                    break;
                }
            }
            if (repl < 0) continue;  // redundant row; artificial stays pinned
            ftran(cols[repl], w);
            const int out = basic[k];
            st[out] = kAtLower;
            const double delta = xb[k] / repl_alpha;
            const double enter_val = nonbasic_value(repl) + delta;
            basic[k] = repl;
            st[repl] = kBasic;
            pivot_update(k, w);
            xb[k] = enter_val;
            compute_xb();
        }
        artificial_basic = false;
        for (int k = 0; k < m; ++k)
            if (basic[k] >= base_cols) artificial_basic = true;
        for (int j = base_cols; j < ncols; ++j) {
            lb[j] = 0.0;
            ub[j] = 0.0;
            if (st[j] != kBasic) st[j] = kAtLower;
        }
        cost = save_cost;
        compute_xb();
        return res;
    }

    // ---- assembly ----

    void fill_primal(LpSolution& sol) const {
        sol.primal.assign(nstruct, 0.0);
        for (int j = 0; j < nstruct; ++j)
            if (st[j] != kBasic) sol.primal[j] = nonbasic_value(j);
        for (int k = 0; k < m; ++k)
            if (basic[k] < nstruct) sol.primal[basic[k]] = xb[k];
    }

    void fill_duals(LpSolution& sol) {
        btran_costs(y);
        sol.dual.assign(m, 0.0);
        for (int i = 0; i < m; ++i)
            sol.dual[i] = rel[i] == Relation::LessEqual ? -y[i] : y[i];
        sol.reduced_costs.assign(nstruct, 0.0);
        const double sgn = maximize ? -1.0 : 1.0;
        for (int j = 0; j < nstruct; ++j) {
            if (st[j] == kBasic) continue;
            sol.reduced_costs[j] = sgn * (cost[j] - col_dot(cols[j], y));
        }
    }

    void fill_basis(LpSolution& sol) const {
        sol.basis.assign(nstruct + m, -1);
        for (int j = 0; j < nstruct + m; ++j) {
            switch (st[j]) {
                case kAtLower: sol.basis[j] = -1; break;
                case kAtUpper: sol.basis[j] = -2; break;
                case kFreeZero: sol.basis[j] = -3; break;
                case kBasic: break;
            }
        }
        for (int k = 0; k < m; ++k) {
            int j = basic[k];
            if (j >= nstruct + m) j = nstruct + k;  // pinned artificial: report the slack
            sol.basis[j] = k;
        }
    }

    // Farkas multipliers on the structural rows; margin must be positive on
    // the variable-bound box.
    double struct_ray_margin(const std::vector<double>& lam) const {
        std::vector<double> g(nstruct, 0.0);
        double rhs_combo = 0.0;
        for (int i = 0; i < m; ++i) {
            const double li = lam[i];
            if (li == 0.0) continue;
            if (rel[i] == Relation::LessEqual && li < -1e-12) return -kInf;
            if (rel[i] == Relation::GreaterEqual && li > 1e-12) return -kInf;
            rhs_combo += li * b[i];
        }
        for (int j = 0; j < nstruct; ++j) {
            double acc = 0.0;
            for (auto& [r, a] : cols[j].entries) acc += a * lam[r];
            g[j] = acc;
        }
        double lhs_min = 0.0;
        for (int j = 0; j < nstruct; ++j) {
            if (std::abs(g[j]) <= 1e-11) continue;
            const double v = g[j] > 0 ? lb[j] : ub[j];
            if (!std::isfinite(v)) return -kInf;
            lhs_min += g[j] * v;
        }
        return lhs_min - rhs_combo;
    }

    std::vector<double> make_ray(const std::vector<double>& duals) {
        std::vector<double> lam(m);
        double norm = 0.0;
        for (int i = 0; i < m; ++i) norm = std::max(norm, std::abs(duals[i]));
        if (norm <= 0) norm = 1.0;
        for (int i = 0; i < m; ++i) lam[i] = -duals[i] / norm;
        // Phase-1 duals give lambda = -y; keep whichever orientation certifies.
        if (struct_ray_margin(lam) <= 0) {
            std::vector<double> neg(m);
            for (int i = 0; i < m; ++i) neg[i] = -lam[i];
            if (struct_ray_margin(neg) > struct_ray_margin(lam)) lam.swap(neg);
        }
        for (int i = 0; i < m; ++i) {
            if (rel[i] == Relation::LessEqual && lam[i] < 0 && lam[i] > -1e-9) lam[i] = 0;
            if (rel[i] == Relation::GreaterEqual && lam[i] > 0 && lam[i] < 1e-9) lam[i] = 0;
        }
        return lam;
    }
};

LpSolver::LpSolver(SimplexOptions opts) : impl_(std::make_unique<Impl>()) { impl_->opts = opts; }
LpSolver::~LpSolver() = default;
LpSolver::LpSolver(LpSolver&&) noexcept = default;
LpSolver& LpSolver::operator=(LpSolver&&) noexcept = default;

void LpSolver::load(const LinearProgram& lp) { impl_->load(lp); }
void LpSolver::set_bounds(int var, double lo, double hi) { impl_->set_bounds(var, lo, hi); }
void LpSolver::set_objective(int var, double coef) { impl_->set_objective_coef(var, coef); }

LpSolution LpSolver::solve() {
    Impl& s = *impl_;
    LpSolution sol;

    auto finalize_optimal = [&](LpSolution& out) {
        out.status = LpStatus::Optimal;
        s.fill_primal(out);
        const double z = s.primal_objective();
        out.objective_value = (s.maximize ? -z : z) + s.obj_offset;
        s.fill_duals(out);
        s.fill_basis(out);
        out.iterations = s.total_iters;
    };

    auto unbounded = [&]() {
        sol.status = LpStatus::Unbounded;
        sol.objective_value = s.maximize ? kInf : -kInf;
        s.fill_primal(sol);
        s.fill_basis(sol);
        sol.iterations = s.total_iters;
        return sol;
    };

    auto infeasible_from_duals = [&](const std::vector<double>& duals) {
        sol.status = LpStatus::Infeasible;
        sol.farkas_ray = s.make_ray(duals);
        sol.objective_value = s.maximize ? -kInf : kInf;
        s.fill_basis(sol);
        sol.iterations = s.total_iters;
        // The phase-1 end state (artificials absorbing the infeasibility) is
        // useless as a warm start; make the next solve begin cold.
        s.has_basis = false;
        return sol;
    };

    // Optimality = dual feasible + primal feasible; alternate the two loops
    // until both hold (tolerance drift can need one extra round).
    auto polish = [&]() -> std::optional<LpSolution> {
        for (int round = 0; round < 4; ++round) {
            if (!s.primal_feasible_basis()) {
                const auto dr = s.dual_loop();
                if (dr == Impl::DualResult::Infeasible) {
                    auto p1 = s.run_phase1();
                    if (p1.breakdown) throw NumericalBreakdown("phase 1 breakdown");
                    if (p1.value > s.opts.feas_tol * 10 && !p1.duals.empty())
                        return infeasible_from_duals(p1.duals);
                    continue;  // feasible after all: re-enter with fresh basis
                }
                if (dr == Impl::DualResult::Stuck || dr == Impl::DualResult::IterLimit)
                    return std::nullopt;
            }
            if (!s.dual_feasible()) {
                const auto lr = s.primal_loop(false);
                if (lr == Impl::LoopResult::Unbounded) return unbounded();
                if (lr != Impl::LoopResult::Optimal) return std::nullopt;
            }
            s.compute_xb();
            if (s.primal_feasible_basis(10.0) && s.dual_feasible()) {
                finalize_optimal(sol);
                return sol;
            }
        }
        return std::nullopt;
    };

    auto cold = [&]() -> LpSolution {
        auto p1 = s.run_phase1();
        if (p1.breakdown) throw NumericalBreakdown("simplex phase 1 could not make progress");
        if (p1.value > s.opts.feas_tol * 10 && !p1.duals.empty())
            return infeasible_from_duals(p1.duals);
        const auto lr = s.primal_loop(false);
        if (lr == Impl::LoopResult::Unbounded) return unbounded();
        if (lr != Impl::LoopResult::Optimal)
            throw NumericalBreakdown("simplex did not converge");
        s.compute_xb();
        if (auto done = polish()) return *done;
        throw NumericalBreakdown("could not certify optimality");
    };

    if (!s.has_basis) return cold();

    s.repair_nonbasic_states();
    if (auto done = polish()) return *done;
    return cold();
}

LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& opts) {
    LpSolver solver(opts);
    solver.load(lp);
    return solver.solve();
}

LpSolution solve_lp_warm(const LinearProgram& lp, const std::vector<int32_t>& basis_hint,
                         const SimplexOptions& opts) {
    (void)basis_hint;  // cross-instance hints are not worth a refactorization here
    return solve_lp(lp, opts);
}

CertificateReport check_certificate(const LinearProgram& lp, const LpSolution& sol,
                                    const SimplexOptions& opts) {
    CertificateReport rep;
    const int n = lp.num_vars();
    const int m = lp.num_rows();

    if (sol.status == LpStatus::Infeasible) {
        std::vector<double> g(n, 0.0);
        double rhs_combo = 0.0;
        bool sign_ok = true;
        for (int i = 0; i < m; ++i) {
            const double li =
                i < static_cast<int>(sol.farkas_ray.size()) ? sol.farkas_ray[i] : 0.0;
            if (lp.rows[i].rel == Relation::LessEqual && li < -1e-9) sign_ok = false;
            if (lp.rows[i].rel == Relation::GreaterEqual && li > 1e-9) sign_ok = false;
            if (li == 0.0) continue;
            rhs_combo += li * lp.rows[i].rhs;
            for (auto& [id, coef] : lp.rows[i].terms) g[id] += li * coef;
        }
        double lhs_min = 0.0;
        bool finite = true;
        for (int j = 0; j < n && finite; ++j) {
            if (std::abs(g[j]) <= 1e-11) continue;
            const double v = g[j] > 0 ? lp.lower[j] : lp.upper[j];
            if (!std::isfinite(v))
                finite = false;
            else
                lhs_min += g[j] * v;
        }
        rep.farkas_margin = finite ? lhs_min - rhs_combo : -kInf;
        rep.farkas_valid = sign_ok && finite && rep.farkas_margin > 1e-9;
        return rep;
    }
    if (sol.status == LpStatus::Unbounded) return rep;

    double worst = 0.0;
    for (int j = 0; j < n; ++j) {
        worst = std::max(worst, lp.lower[j] - sol.primal[j]);
        worst = std::max(worst, sol.primal[j] - lp.upper[j]);
    }
    for (const auto& row : lp.rows) {
        double act = 0.0;
        for (auto& [id, coef] : row.terms) act += coef * sol.primal[id];
        switch (row.rel) {
            case Relation::LessEqual: worst = std::max(worst, act - row.rhs); break;
            case Relation::GreaterEqual: worst = std::max(worst, row.rhs - act); break;
            case Relation::Equal: worst = std::max(worst, std::abs(act - row.rhs)); break;
        }
    }
    rep.max_primal_violation = worst;
    rep.primal_feasible = worst <= opts.feas_tol * 10;

    rep.dual_feasible = true;
    for (int i = 0; i < m; ++i)
        if (lp.rows[i].rel != Relation::Equal && sol.dual[i] < -1e-6) rep.dual_feasible = false;

    const double sgn = lp.sense == Sense::Maximize ? -1.0 : 1.0;
    std::vector<double> y(m);
    for (int i = 0; i < m; ++i)
        y[i] = lp.rows[i].rel == Relation::LessEqual ? -sol.dual[i] : sol.dual[i];
    std::vector<double> dcv(n);
    for (int j = 0; j < n; ++j) dcv[j] = sgn * lp.objective[j];
    for (int i = 0; i < m; ++i) {
        if (y[i] == 0.0) continue;
        for (auto& [id, coef] : lp.rows[i].terms) dcv[id] -= y[i] * coef;
    }
    double dual_obj = 0.0;
    for (int i = 0; i < m; ++i) dual_obj += y[i] * lp.rows[i].rhs;
    for (int j = 0; j < n; ++j) {
        if (std::abs(dcv[j]) <= 1e-9) continue;
        const double v = dcv[j] > 0 ? lp.lower[j] : lp.upper[j];
        if (std::isfinite(v)) dual_obj += dcv[j] * v;
    }
    const double primal_min = sgn * (sol.objective_value - lp.objective_offset);
    rep.duality_gap = std::abs(primal_min - dual_obj);
    rep.duality_gap_ok = rep.duality_gap <= 1e-6 * (1.0 + std::abs(primal_min));

    rep.complementary_slackness = true;
    for (int i = 0; i < m; ++i) {
        if (lp.rows[i].rel == Relation::Equal) continue;
        double act = 0.0;
        for (auto& [id, coef] : lp.rows[i].terms) act += coef * sol.primal[id];
        const double slack = lp.rows[i].rel == Relation::LessEqual ? lp.rows[i].rhs - act
                                                                   : act - lp.rows[i].rhs;
        if (std::abs(sol.dual[i]) > 1e-6 && slack > 1e-6 * (1.0 + std::abs(lp.rows[i].rhs)))
            rep.complementary_slackness = false;
    }
    return rep;
}

}  // namespace prhr
