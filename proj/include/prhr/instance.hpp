#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "prhr/util.hpp"

namespace prhr {

class SchemaMismatch : public std::runtime_error {
  public:
    explicit SchemaMismatch(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
  public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// One scenario's stochastic data. Score factors are "risk-free" scores: the
// model treats a total score falling below the threshold as network risk.
struct Scenario {
    double probability = 0.0;
    Grid3 unit_cost;      // (i, j, t), currency per flow unit
    Grid2 flow;           // (i, t), flow routed through hub i
    Grid2 node_risk_free; // (i, t)
    Grid3 link_risk_free; // (i, j, t)
    double node_threshold = 0.0;
    double link_threshold = 0.0;
};

struct Instance {
    int n_nodes = 0;
    int n_periods = 0;
    double tau = 0.8;
    double theta1 = 0.4;
    double theta2 = 0.6;
    Grid2 fixed_cost;                             // (i, t)
    std::vector<std::array<double, 2>> node_xy;   // generator provenance
    std::vector<Scenario> scenarios;

    int n_scenarios() const { return static_cast<int>(scenarios.size()); }
    // Throws SchemaMismatch when a model invariant is broken (shape mismatch,
    // probabilities not summing to one, negative costs, bad weights).
    void validate() const;
};

enum class DistributionKind { Uniform, TruncatedNormal };

struct GeneratorParams {
    int n_nodes = 5;
    int n_periods = 3;
    int n_scenarios = 5;
    uint64_t seed = 1;
    double tau = 0.8;
    double theta1 = 0.4;
    double theta2 = 0.6;
    DistributionKind distribution = DistributionKind::Uniform;
    // unit transport cost per leg; a hub link costs access + tau * inter-hub
    double cost_min = 10.0, cost_max = 20.0;
    // stochastic flow = U[flow_factor] * mean distance from the node
    double flow_factor_min = 0.5, flow_factor_max = 0.8;
    // base flow matrix feeding the setup-cost magnitude
    double base_flow_min = 1.0, base_flow_max = 100.0;
    // setup cost = U[setup_mult] * log10(max(O1, 1.01))
    double setup_mult_min = 100.0, setup_mult_max = 200.0;
    // risk-free score factors
    double score_min = 0.0, score_max = 10.0;
    // thresholds drawn from [lo_factor*|H||T|, hi_factor*|H||T||S|]
    double threshold_lo_factor = 1.0, threshold_hi_factor = 10.0;
    double plane_size = 1000.0;
    // shifts the scenario index range of every stochastic stream; used to
    // resample scenarios over the same deterministic network
    int64_t scenario_offset = 0;

    void validate() const;
};

// Deterministic: every draw is a pure function of (seed, field name, indices).
Instance generate_instance(const GeneratorParams& params);

void save_instance(const Instance& instance, const std::string& path);
Instance load_instance(const std::string& path);

}  // namespace prhr
