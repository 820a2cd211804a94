#pragma once

#include "prhr/lagrangian.hpp"

namespace prhr {

struct SaaConfig {
    int sample_size = 25;     // scenarios per replication
    int replications = 50;
    int reference_size = 500; // must exceed sample_size
    uint64_t seed = 1;
    double solve_budget_s = 60.0;  // per replication

    void validate() const {
        if (reference_size <= sample_size)
            throw std::invalid_argument("reference sample must exceed the sample size");
        if (replications < 2)
            throw std::invalid_argument("variance estimation needs >= 2 replications");
        if (sample_size < 1) throw std::invalid_argument("sample size must be positive");
    }
};

struct SaaReplicationRow {
    int replication = 0;
    double objective = 0.0;
    long solve_nodes = 0;
    long wall_ms = 0;
    bool failed = false;
};

struct SaaReport {
    std::vector<double> replication_values;  // successful replications only
    std::vector<SaaReplicationRow> rows;     // all replications, CSV-ready
    int failed_count = 0;
    double mu_lb = 0.0, var_lb = 0.0;
    double ub = 0.0, var_ub = 0.0;
    double gap = 0.0, var_gap = 0.0;
    int chosen_replication = -1;
    Grid2 chosen_open, chosen_carryover;
    // the shared scaling actually used (raw units)
    double gamma_star_raw = 0.0, gamma_max_raw = 1.0;
    double omega_star = 0.0, omega_max = 1.0;
};

// Sample-average scheme: replications are independent scenario redraws over a
// fixed network (only scenario streams shift), each solved to optimality; the
// lower-bound mean/variance, the fixed-first-stage reference evaluation, and
// the gap estimate use one shared objective scaling.
SaaReport run_saa(const GeneratorParams& template_params, const SaaConfig& config);

// mean and the replication-variance estimate of the lower bound
std::pair<double, double> lower_bound_stats(const std::vector<double>& values);

// Fix (Z, V) and evaluate every reference scenario's second stage; returns
// (mean, variance-of-the-mean).
std::pair<double, double> upper_bound_eval(const ModelContext& reference_ctx,
                                           const Grid2& open, const Grid2& carryover);

struct VssReport {
    double rp = 0.0;   // optimum of the sampled stochastic program
    double eev = 0.0;  // cost of the mean-value design under the same program
    double vss = 0.0;  // eev - rp
};

VssReport compute_vss(const GeneratorParams& template_params, const SaaConfig& config);

// Scenario resampling hook: same network, scenario streams shifted into a
// disjoint index range.
Instance sample_instance(const GeneratorParams& template_params, int n_scenarios,
                         int64_t scenario_offset);

}  // namespace prhr
