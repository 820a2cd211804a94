#pragma once

#include <cstdint>
#include <vector>

#include "prhr/instance.hpp"
#include "prhr/model.hpp"

namespace prhr {

struct FailureSimConfig {
    int n_scenarios = 1000;
    double failure_probability = 0.1;  // per used hub link, per simulation
    uint64_t seed = 0;

    void validate() const {
        if (failure_probability < 0.0 || failure_probability > 1.0)
            throw std::invalid_argument("failure probability must lie in [0,1]");
        if (n_scenarios < 1) throw std::invalid_argument("need at least one simulation");
    }
};

struct FailureSimResult {
    double total_unserved = 0.0;             // flow units over all simulations
    std::vector<double> per_scenario;        // unserved per simulation draw
};

// Each distinct hub link used by the design fails independently per
// simulation; flow routed over a failed link in a period counts as unserved.
// Only hub links are modeled (the design variables cover no access legs).
FailureSimResult simulate_failures(const NetworkDesign& design, const Instance& instance,
                                   const FailureSimConfig& config);

}  // namespace prhr
