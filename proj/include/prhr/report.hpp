#pragma once

#include <functional>
#include <string>
#include <vector>

#include "prhr/failure.hpp"
#include "prhr/lagrangian.hpp"
#include "prhr/saa.hpp"

namespace prhr {

enum class SolveStrategy { Exact, ClassicLr, Sbd, Mbd, Pbd, Mpbd };
const char* solve_strategy_name(SolveStrategy s);
SolveStrategy parse_strategy(const std::string& name);  // throws on unknown

struct RunConfig {
    std::string command;
    std::string instance_path;  // empty = generate
    GeneratorParams gen;
    SolveStrategy strategy = SolveStrategy::Mpbd;
    double eps_lr = 0.001;
    double eps_bd = 0.01;
    double sigma0 = 2.0;
    double lambda = 0.5;
    int iter1_max = 30;
    int iter2_max = 20;
    double time_max_s = 10000.0;
    uint64_t seed = 1;
    int samples = 25;
    int replications = 50;
    int reference = 500;
    std::vector<int> sample_grid;       // sweep values; empty = {samples}
    std::vector<int> replication_grid;  // sweep values; empty = {replications}
    double failure_prob = 0.1;
    int failure_scenarios = 1000;
    std::string out_dir = "out";

    void validate() const;
};

struct SolveReport {
    SolveStrategy strategy = SolveStrategy::Mpbd;
    double lb = -kInf, ub = kInf, gap = kInf;
    double objective = kInf;  // = ub for heuristics, exact value for `exact`
    NetworkDesign design;
    bool has_design = false;
    int outer_iterations = 0;
    long inner_iterations = 0;
    long cuts = 0;
    long lp_or_master_nodes = 0;
    long wall_ms = 0;
    std::vector<LrTraceRow> outer_trace;
    std::vector<BdTraceRow> inner_trace;
};

// gap guarded against tiny denominators
double report_gap(double lb, double ub);

SolveReport run_solve(const ModelContext& ctx, const RunConfig& config);

// ---- file emission -------------------------------------------------------------

void write_outer_trace_csv(const std::string& path, const std::vector<LrTraceRow>& rows);
void write_inner_trace_csv(const std::string& path, const std::vector<BdTraceRow>& rows,
                           const std::string& strategy);
void write_saa_replications_csv(const std::string& path,
                                const std::vector<SaaReplicationRow>& rows);
void write_failure_csv(const std::string& path, const FailureSimResult& result);

// manifest with the full effective configuration and a replay digest
void write_manifest(const std::string& path, const RunConfig& config);

// summary document; validates against the committed schema before writing
void write_summary(const std::string& path, const std::string& json_text);
std::string validate_summary_against_schema(const std::string& summary_json,
                                            const std::string& schema_json);  // "" when ok

uint64_t config_digest(const RunConfig& config);

// Bounded worker pool honoring PRHR_THREADS; results are folded by index so
// the outcome is independent of scheduling.
int worker_count();
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace prhr
