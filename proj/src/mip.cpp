#include "prhr/mip.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>

namespace prhr {

void MixedIntegerProgram::validate() const {
    base.validate();
    for (int id : binary_ids) {
        if (id < 0 || id >= base.num_vars())
            throw std::invalid_argument("binary id " + std::to_string(id) + " not registered");
        if (base.lower[id] < 0.0 || base.upper[id] > 1.0)
            throw std::invalid_argument("binary variable " + std::to_string(id) +
                                        " must have bounds within [0,1]");
    }
}

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

struct Node {
    double bound;  // min-form LP bound
    long seq;
    std::vector<int8_t> fix;  // per binary: -1 free, 0, 1
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.bound != b.bound) return a.bound > b.bound;  // smaller bound first
        return a.seq > b.seq;                              // FIFO among equal bounds
    }
};

}  // namespace

MipSolution solve_mip(const MixedIntegerProgram& mip, const MipLimits& limits) {
    mip.validate();
    const double t0 = now_s();
    const bool maximize = mip.base.sense == Sense::Maximize;
    const double sgn = maximize ? -1.0 : 1.0;
    const int nbin = static_cast<int>(mip.binary_ids.size());

    LpSolver session;
    session.load(mip.base);

    MipSolution out;
    out.objective_value = kInf;  // min-form incumbent value
    double incumbent_min = kInf;
    std::vector<double> incumbent;

    std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
    long seq = 0;
    open.push(Node{-kInf, seq++, std::vector<int8_t>(nbin, -1)});

    double reported_bound = -kInf;
    bool monotone = true;
    bool hit_limit = false;

    auto apply_node = [&](const Node& node) {
        for (int bi = 0; bi < nbin; ++bi) {
            const int id = mip.binary_ids[bi];
            if (node.fix[bi] < 0)
                session.set_bounds(id, mip.base.lower[id], mip.base.upper[id]);
            else
                session.set_bounds(id, node.fix[bi], node.fix[bi]);
        }
    };

    while (!open.empty()) {
        const double gap_abs = limits.rel_gap * std::max(1.0, std::abs(incumbent_min));
        const Node node = open.top();

        // global bound = best of open nodes (the queue is bound-ordered)
        const double glb = std::min(node.bound == -kInf ? incumbent_min : node.bound,
                                    incumbent_min);
        if (std::isfinite(node.bound)) {
            if (node.bound < reported_bound - 1e-9) monotone = false;
            reported_bound = std::max(reported_bound, node.bound);
        }
        if (node.bound >= incumbent_min - gap_abs && std::isfinite(incumbent_min)) break;
        (void)glb;
        open.pop();

        if (out.nodes_explored >= limits.node_budget ||
            now_s() - t0 > limits.time_budget_s) {
            hit_limit = true;
            break;
        }
        ++out.nodes_explored;

        apply_node(node);
        LpSolution lp = session.solve();
        if (lp.status == LpStatus::Infeasible) continue;
        if (lp.status == LpStatus::Unbounded)
            throw std::runtime_error("unbounded LP relaxation in branch and bound");
        const double val = sgn * (lp.objective_value - mip.base.objective_offset);

        if (val >= incumbent_min - gap_abs) continue;  // pruned by bound

        // find most fractional binary
        int branch = -1;
        double most = 1e-6;
        for (int bi = 0; bi < nbin; ++bi) {
            const double x = lp.primal[mip.binary_ids[bi]];
            const double frac = std::min(x - std::floor(x), std::ceil(x) - x);
            const double dist = std::min(x, 1.0 - x);
            (void)frac;
            if (node.fix[bi] >= 0) continue;
            if (dist > most + 1e-12) {
                most = dist;
                branch = bi;
            }
        }
        if (branch < 0) {
            // integral point
            if (val < incumbent_min - 1e-12) {
                incumbent_min = val;
                incumbent = lp.primal;
                for (int bi = 0; bi < nbin; ++bi)
                    incumbent[mip.binary_ids[bi]] = std::round(incumbent[mip.binary_ids[bi]]);
            }
            continue;
        }
        for (int8_t v : {static_cast<int8_t>(0), static_cast<int8_t>(1)}) {
            Node child{val, seq++, node.fix};
            child.fix[branch] = v;
            open.push(child);
        }
    }

    const double final_bound_min =
        open.empty() ? incumbent_min : std::min(open.top().bound, incumbent_min);

    out.bound_monotone = monotone;
    if (!std::isfinite(incumbent_min)) {
        if (hit_limit) throw NoIncumbentFound("budget expired with no integral feasible point");
        out.status = MipStatus::Infeasible;
        out.best_bound = maximize ? -kInf : kInf;
        out.objective_value = maximize ? -kInf : kInf;
        return out;
    }
    out.status = hit_limit ? MipStatus::LimitReached : MipStatus::Optimal;
    out.incumbent = std::move(incumbent);
    out.objective_value = (sgn < 0 ? -incumbent_min : incumbent_min) + mip.base.objective_offset;
    out.best_bound = (sgn < 0 ? -final_bound_min : final_bound_min) + mip.base.objective_offset;
    return out;
}

MipSolution enumerate_binary_optimum(const MixedIntegerProgram& mip) {
    mip.validate();
    const int K = static_cast<int>(mip.binary_ids.size());
    if (K > 24) throw TooManyBinaries("enumeration supports at most 24 binaries, got " +
                                      std::to_string(K));
    const bool maximize = mip.base.sense == Sense::Maximize;
    const double sgn = maximize ? -1.0 : 1.0;

    // rows whose support is purely binary can reject assignments cheaply
    std::vector<char> is_bin(mip.base.num_vars(), 0);
    for (int id : mip.binary_ids) is_bin[id] = 1;
    std::vector<int> pure_rows;
    for (int i = 0; i < mip.base.num_rows(); ++i) {
        bool pure = true;
        for (auto& [id, c] : mip.base.rows[i].terms)
            if (!is_bin[id] && c != 0.0) pure = false;
        if (pure) pure_rows.push_back(i);
    }

    LpSolver session;
    session.load(mip.base);

    MipSolution out;
    double best_min = kInf;
    std::vector<int8_t> best_bits;
    std::vector<double> best_primal;
    long solved = 0;

    std::vector<int8_t> bits(K, 0);
    const uint64_t total = K == 0 ? 1 : (1ull << K);
    uint64_t gray_prev = 0;
    for (uint64_t k = 0; k < total; ++k) {
        const uint64_t gray = k ^ (k >> 1);
        if (k > 0) {
            const uint64_t diff = gray ^ gray_prev;
            for (int bi = 0; bi < K; ++bi)
                if (diff & (1ull << bi)) bits[bi] ^= 1;
        }
        gray_prev = gray;

        // respect fixed binaries in the base bounds
        bool ok = true;
        for (int bi = 0; bi < K && ok; ++bi) {
            const int id = mip.binary_ids[bi];
            if (bits[bi] < mip.base.lower[id] - 0.5 || bits[bi] > mip.base.upper[id] + 0.5)
                ok = false;
        }
        if (!ok) continue;
        for (int r : pure_rows) {
            const auto& row = mip.base.rows[r];
            double act = 0.0;
            for (auto& [id, c] : row.terms) {
                int bi = 0;
                while (mip.binary_ids[bi] != id) ++bi;
                act += c * bits[bi];
            }
            const double tol = 1e-9;
            if (row.rel == Relation::LessEqual && act > row.rhs + tol) ok = false;
            if (row.rel == Relation::GreaterEqual && act < row.rhs - tol) ok = false;
            if (row.rel == Relation::Equal && std::abs(act - row.rhs) > tol) ok = false;
            if (!ok) break;
        }
        if (!ok) continue;

        for (int bi = 0; bi < K; ++bi)
            session.set_bounds(mip.binary_ids[bi], bits[bi], bits[bi]);
        LpSolution lp = session.solve();
        ++solved;
        if (lp.status == LpStatus::Infeasible) continue;
        if (lp.status == LpStatus::Unbounded)
            throw std::runtime_error("unbounded continuous remainder in enumeration");
        const double val = sgn * (lp.objective_value - mip.base.objective_offset);
        bool take = false;
        if (val < best_min - 1e-9) {
            take = true;
        } else if (val < best_min + 1e-9 && !best_bits.empty()) {
            take = std::lexicographical_compare(bits.begin(), bits.end(), best_bits.begin(),
                                                best_bits.end());
        }
        if (take) {
            best_min = val;
            best_bits = bits;
            best_primal = lp.primal;
            for (int bi = 0; bi < K; ++bi)
                best_primal[mip.binary_ids[bi]] = bits[bi];
        }
    }

    out.nodes_explored = solved;
    if (!std::isfinite(best_min)) {
        out.status = MipStatus::Infeasible;
        out.objective_value = maximize ? -kInf : kInf;
        out.best_bound = out.objective_value;
        return out;
    }
    out.status = MipStatus::Optimal;
    out.incumbent = std::move(best_primal);
    out.objective_value = (sgn < 0 ? -best_min : best_min) + mip.base.objective_offset;
    out.best_bound = out.objective_value;
    return out;
}

}  // namespace prhr
