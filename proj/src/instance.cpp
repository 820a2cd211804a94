#include "prhr/instance.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "prhr/rng.hpp"

namespace prhr {

using nlohmann::json;

void GeneratorParams::validate() const {
    auto range_ok = [](double lo, double hi) { return std::isfinite(lo) && lo <= hi; };
    if (n_nodes < 2 || n_periods < 1 || n_scenarios < 1)
        throw std::invalid_argument("generator needs >=2 nodes, >=1 period, >=1 scenario");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
    if (!(theta1 > 0.0 && theta2 > 0.0 && std::abs(theta1 + theta2 - 1.0) < 1e-9))
        throw std::invalid_argument("theta weights must be positive and sum to 1");
    if (!range_ok(cost_min, cost_max) || !range_ok(flow_factor_min, flow_factor_max) ||
        !range_ok(base_flow_min, base_flow_max) || !range_ok(setup_mult_min, setup_mult_max) ||
        !range_ok(score_min, score_max))
        throw std::invalid_argument("generator ranges must be non-empty");
    if (threshold_lo_factor < 0 || threshold_hi_factor < threshold_lo_factor)
        throw std::invalid_argument("threshold factors out of order");
}

void Instance::validate() const {
    const int H = n_nodes, T = n_periods, S = n_scenarios();
    if (H < 2) throw SchemaMismatch("instance needs at least 2 nodes");
    if (T < 1) throw SchemaMismatch("instance needs at least 1 period");
    if (S < 1) throw SchemaMismatch("instance needs at least 1 scenario");
    if (!(theta1 > 0.0 && theta2 > 0.0 && std::abs(theta1 + theta2 - 1.0) < 1e-9))
        throw SchemaMismatch("theta weights must be positive and sum to 1");
    if (!(tau > 0.0 && tau < 1.0)) throw SchemaMismatch("tau must lie in (0,1)");
    if (fixed_cost.n1 != H || fixed_cost.n2 != T)
        throw SchemaMismatch("fixed_cost shape mismatch");
    double psum = 0.0;
    for (const auto& sc : scenarios) {
        if (sc.probability < 0) throw SchemaMismatch("negative scenario probability");
        psum += sc.probability;
        if (sc.unit_cost.n1 != H || sc.unit_cost.n2 != H || sc.unit_cost.n3 != T)
            throw SchemaMismatch("unit_cost shape mismatch");
        if (sc.flow.n1 != H || sc.flow.n2 != T) throw SchemaMismatch("flow shape mismatch");
        if (sc.node_risk_free.n1 != H || sc.node_risk_free.n2 != T)
            throw SchemaMismatch("node_risk_free shape mismatch");
        if (sc.link_risk_free.n1 != H || sc.link_risk_free.n2 != H ||
            sc.link_risk_free.n3 != T)
            throw SchemaMismatch("link_risk_free shape mismatch");
        if (!std::isfinite(sc.node_threshold) || !std::isfinite(sc.link_threshold))
            throw SchemaMismatch("thresholds must be finite");
        for (double v : sc.unit_cost.v)
            if (v < 0) throw SchemaMismatch("negative unit cost");
        for (double v : sc.flow.v)
            if (v < 0) throw SchemaMismatch("negative flow");
    }
    if (std::abs(psum - 1.0) > 1e-9)
        throw SchemaMismatch("scenario probabilities must sum to 1 (got " +
                             std::to_string(psum) + ")");
    for (double v : fixed_cost.v)
        if (v < 0) throw SchemaMismatch("negative fixed cost");
}

namespace {

// One positive draw honoring the configured distribution. Truncated-normal
// redraws until non-negative, at most 100 times, then clamps to zero.
double draw_range(const CounterRng& rng, DistributionKind kind, double lo, double hi,
                  std::string_view name, int64_t a = 0, int64_t b = 0, int64_t c = 0,
                  int64_t d = 0) {
    if (kind == DistributionKind::Uniform) return rng.uniform(lo, hi, name, a, b, c, d);
    const double mean = 0.5 * (lo + hi);
    const double sd = (hi - lo) / 6.0;
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double v = mean + sd * rng.normal(name, a, b, c, d * 131 + attempt + 1);
        if (v >= 0.0) return v;
    }
    return 0.0;
}

}  // namespace

Instance generate_instance(const GeneratorParams& p) {
    p.validate();
    const int H = p.n_nodes, T = p.n_periods, S = p.n_scenarios;
    CounterRng rng(p.seed);
    const DistributionKind kind = p.distribution;

    Instance inst;
    inst.n_nodes = H;
    inst.n_periods = T;
    inst.tau = p.tau;
    inst.theta1 = p.theta1;
    inst.theta2 = p.theta2;

    inst.node_xy.resize(H);
    for (int i = 0; i < H; ++i) {
        inst.node_xy[i] = {rng.uniform(0.0, p.plane_size, "coord_x", i),
                           rng.uniform(0.0, p.plane_size, "coord_y", i)};
    }
    auto dist = [&](int i, int j) {
        const double dx = inst.node_xy[i][0] - inst.node_xy[j][0];
        const double dy = inst.node_xy[i][1] - inst.node_xy[j][1];
        return std::sqrt(dx * dx + dy * dy);
    };
    std::vector<double> mean_dist(H, 0.0);
    for (int i = 0; i < H; ++i) {
        double acc = 0.0;
        for (int j = 0; j < H; ++j)
            if (j != i) acc += dist(i, j);
        mean_dist[i] = acc / std::max(1, H - 1);
    }

    // symmetric base flow matrix, the stand-in for historical flows
    Grid2 base_flow(H, H, 0.0);
    for (int i = 0; i < H; ++i)
        for (int j = i + 1; j < H; ++j) {
            const double v = rng.uniform(p.base_flow_min, p.base_flow_max, "base_flow", i, j);
            base_flow(i, j) = v;
            base_flow(j, i) = v;
        }

    inst.fixed_cost = Grid2(H, T, 0.0);
    for (int i = 0; i < H; ++i) {
        double out_flow = 0.0;
        for (int j = 0; j < H; ++j) out_flow += base_flow(i, j);
        for (int t = 0; t < T; ++t) {
            const double o1 = rng.uniform(0.5, 1.0, "setup_o1", i, t) * out_flow;
            const double lg = std::log10(std::max(o1, 1.01));
            inst.fixed_cost(i, t) =
                draw_range(rng, kind, p.setup_mult_min * lg, p.setup_mult_max * lg, "setup", i, t);
        }
    }

    // per-period origin/destination terminals served by the hub pair
    std::vector<int> origin(T), destination(T);
    for (int t = 0; t < T; ++t) {
        origin[t] = static_cast<int>(rng.bits("origin", t) % H);
        destination[t] = static_cast<int>(rng.bits("dest", t) % H);
    }

    const double thr_lo = p.threshold_lo_factor * H * T;
    const double thr_hi = p.threshold_hi_factor * H * T * S;

    inst.scenarios.resize(S);
    for (int s0 = 0; s0 < S; ++s0) {
        const int64_t s = s0 + p.scenario_offset;
        Scenario& sc = inst.scenarios[s0];
        sc.probability = 1.0 / S;
        sc.unit_cost = Grid3(H, H, T, 0.0);
        sc.flow = Grid2(H, T, 0.0);
        sc.node_risk_free = Grid2(H, T, 0.0);
        sc.link_risk_free = Grid3(H, H, T, 0.0);
        sc.node_threshold = draw_range(rng, kind, thr_lo, thr_hi, "node_threshold", s);
        sc.link_threshold = draw_range(rng, kind, thr_lo, thr_hi, "link_threshold", s);

        auto leg = [&](int a, int b, int t) {
            if (a == b) return 0.0;
            return draw_range(rng, kind, p.cost_min, p.cost_max, "leg", s, t,
                              static_cast<int64_t>(a) * H + b);
        };
        for (int t = 0; t < T; ++t) {
            for (int i = 0; i < H; ++i) {
                sc.flow(i, t) = draw_range(rng, kind, p.flow_factor_min * mean_dist[i],
                                           p.flow_factor_max * mean_dist[i], "flow", s, i, t);
                sc.node_risk_free(i, t) =
                    draw_range(rng, kind, p.score_min, p.score_max, "node_score", s, i, t);
                for (int j = 0; j < H; ++j) {
                    sc.unit_cost(i, j, t) =
                        leg(origin[t], i, t) + p.tau * leg(i, j, t) + leg(j, destination[t], t);
                    sc.link_risk_free(i, j, t) =
                        draw_range(rng, kind, p.score_min, p.score_max, "link_score", s,
                                   static_cast<int64_t>(i) * H + j, t);
                }
            }
        }
    }
    inst.validate();
    return inst;
}

namespace {

json grid2_to_json(const Grid2& g) {
    json rows = json::array();
    for (int a = 0; a < g.n1; ++a) {
        json row = json::array();
        for (int b = 0; b < g.n2; ++b) row.push_back(g(a, b));
        rows.push_back(std::move(row));
    }
    return rows;
}

json grid3_to_json(const Grid3& g) {
    json out = json::array();
    for (int a = 0; a < g.n1; ++a) {
        json mid = json::array();
        for (int b = 0; b < g.n2; ++b) {
            json row = json::array();
            for (int c = 0; c < g.n3; ++c) row.push_back(g(a, b, c));
            mid.push_back(std::move(row));
        }
        out.push_back(std::move(mid));
    }
    return out;
}

Grid2 grid2_from_json(const json& j, int n1, int n2, const char* field) {
    if (!j.is_array() || static_cast<int>(j.size()) != n1)
        throw SchemaMismatch(std::string(field) + ": expected " + std::to_string(n1) + " rows");
    Grid2 g(n1, n2, 0.0);
    for (int a = 0; a < n1; ++a) {
        const auto& row = j[a];
        if (!row.is_array() || static_cast<int>(row.size()) != n2)
            throw SchemaMismatch(std::string(field) + "[" + std::to_string(a) + "]: expected " +
                                 std::to_string(n2) + " entries");
        for (int b = 0; b < n2; ++b) g(a, b) = row[b].get<double>();
    }
    return g;
}

Grid3 grid3_from_json(const json& j, int n1, int n2, int n3, const char* field) {
    if (!j.is_array() || static_cast<int>(j.size()) != n1)
        throw SchemaMismatch(std::string(field) + ": expected " + std::to_string(n1) + " blocks");
    Grid3 g(n1, n2, n3, 0.0);
    for (int a = 0; a < n1; ++a) {
        const auto& mid = j[a];
        if (!mid.is_array() || static_cast<int>(mid.size()) != n2)
            throw SchemaMismatch(std::string(field) + "[" + std::to_string(a) + "]: expected " +
                                 std::to_string(n2) + " rows");
        for (int b = 0; b < n2; ++b) {
            const auto& row = mid[b];
            if (!row.is_array() || static_cast<int>(row.size()) != n3)
                throw SchemaMismatch(std::string(field) + "[" + std::to_string(a) + "][" +
                                     std::to_string(b) + "]: expected " + std::to_string(n3) +
                                     " entries");
            for (int c = 0; c < n3; ++c) g(a, b, c) = row[c].get<double>();
        }
    }
    return g;
}

constexpr const char* kSchemaTag = "prhr-instance/v1";

}  // namespace

void save_instance(const Instance& inst, const std::string& path) {
    inst.validate();
    json doc;
    doc["schema"] = kSchemaTag;
    doc["nodes"] = inst.n_nodes;
    doc["periods"] = inst.n_periods;
    doc["tau"] = inst.tau;
    doc["theta1"] = inst.theta1;
    doc["theta2"] = inst.theta2;
    doc["fixed_cost"] = grid2_to_json(inst.fixed_cost);
    json xy = json::array();
    for (auto& c : inst.node_xy) xy.push_back(json::array({c[0], c[1]}));
    doc["node_xy"] = std::move(xy);
    json scenarios = json::array();
    for (const auto& sc : inst.scenarios) {
        json s;
        s["probability"] = sc.probability;
        s["node_threshold"] = sc.node_threshold;
        s["link_threshold"] = sc.link_threshold;
        s["unit_cost"] = grid3_to_json(sc.unit_cost);
        s["flow"] = grid2_to_json(sc.flow);
        s["node_risk_free"] = grid2_to_json(sc.node_risk_free);
        s["link_risk_free"] = grid3_to_json(sc.link_risk_free);
        scenarios.push_back(std::move(s));
    }
    doc["scenarios"] = std::move(scenarios);

    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << doc.dump(1) << "\n";
    if (!os) throw std::runtime_error("write failed: " + path);
}

Instance load_instance(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("cannot open: " + path);
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        if (!doc.contains("schema") || doc["schema"] != kSchemaTag)
            throw SchemaMismatch(path + ": missing or unsupported schema tag (want " +
                                 std::string(kSchemaTag) + ")");
        Instance inst;
        inst.n_nodes = doc.at("nodes").get<int>();
        inst.n_periods = doc.at("periods").get<int>();
        inst.tau = doc.at("tau").get<double>();
        inst.theta1 = doc.at("theta1").get<double>();
        inst.theta2 = doc.at("theta2").get<double>();
        const int H = inst.n_nodes, T = inst.n_periods;
        inst.fixed_cost = grid2_from_json(doc.at("fixed_cost"), H, T, "fixed_cost");
        if (doc.contains("node_xy")) {
            const auto& xy = doc["node_xy"];
            if (!xy.is_array() || static_cast<int>(xy.size()) != H)
                throw SchemaMismatch("node_xy: expected one entry per node");
            inst.node_xy.resize(H);
            for (int i = 0; i < H; ++i)
                inst.node_xy[i] = {xy[i][0].get<double>(), xy[i][1].get<double>()};
        }
        const auto& scen = doc.at("scenarios");
        if (!scen.is_array() || scen.empty())
            throw SchemaMismatch("scenarios: expected a non-empty array");
        for (const auto& s : scen) {
            Scenario sc;
            sc.probability = s.at("probability").get<double>();
            sc.node_threshold = s.at("node_threshold").get<double>();
            sc.link_threshold = s.at("link_threshold").get<double>();
            sc.unit_cost = grid3_from_json(s.at("unit_cost"), H, H, T, "unit_cost");
            sc.flow = grid2_from_json(s.at("flow"), H, T, "flow");
            sc.node_risk_free = grid2_from_json(s.at("node_risk_free"), H, T, "node_risk_free");
            sc.link_risk_free =
                grid3_from_json(s.at("link_risk_free"), H, H, T, "link_risk_free");
            inst.scenarios.push_back(std::move(sc));
        }
        inst.validate();
        return inst;
    } catch (const json::exception& e) {
        throw SchemaMismatch(path + ": " + e.what());
    }
}

}  // namespace prhr

// ---- failure simulation (post-hoc, design-level) -------------------------------

#include "prhr/failure.hpp"

namespace prhr {

FailureSimResult simulate_failures(const NetworkDesign& design, const Instance& inst,
                                   const FailureSimConfig& config) {
    config.validate();
    const int H = inst.n_nodes, T = inst.n_periods, S = inst.n_scenarios();
    CounterRng rng(config.seed);
    FailureSimResult out;
    out.per_scenario.assign(config.n_scenarios, 0.0);

    // distinct links carrying flow anywhere in the design
    std::vector<std::pair<int, int>> used;
    Grid2 used_mask(H, H, 0.0);
    for (int s = 0; s < S; ++s)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < H; ++j)
                for (int t = 0; t < T; ++t)
                    if (design.links[s](i, j, t) > 1e-9) used_mask(i, j) = 1.0;
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < H; ++j)
            if (used_mask(i, j) > 0.5) used.push_back({i, j});

    for (int k = 0; k < config.n_scenarios; ++k) {
        double lost = 0.0;
        for (auto [i, j] : used) {
            const bool fails =
                rng.u01("fail", k, static_cast<int64_t>(i) * H + j) < config.failure_probability;
            if (!fails) continue;
            for (int s = 0; s < S; ++s)
                for (int t = 0; t < T; ++t)
                    lost += inst.scenarios[s].flow(i, t) * design.links[s](i, j, t);
        }
        out.per_scenario[k] = lost;
        out.total_unserved += lost;
    }
    return out;
}

}  // namespace prhr
