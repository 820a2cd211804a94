// Command-line front door: instance generation, solves under every strategy,
// sample-average studies, cut-strategy comparisons, and failure simulation.
// All output goes to files under --out; exit status is nonzero unless every
// requested artifact was written.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "prhr/report.hpp"

using namespace prhr;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Cli {
    RunConfig cfg;
    std::string samples_list, replications_list;
};

std::vector<int> parse_int_list(const std::string& text, int fallback) {
    if (text.empty()) return {fallback};
    std::vector<int> out;
    std::istringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(std::stoi(part));
    if (out.empty()) out.push_back(fallback);
    return out;
}

Instance obtain_instance(RunConfig& cfg) {
    if (!cfg.instance_path.empty()) {
        Instance inst = load_instance(cfg.instance_path);
        cfg.gen.n_nodes = inst.n_nodes;
        cfg.gen.n_periods = inst.n_periods;
        cfg.gen.n_scenarios = inst.n_scenarios();
        cfg.gen.tau = inst.tau;
        cfg.gen.theta1 = inst.theta1;
        cfg.gen.theta2 = inst.theta2;
        return inst;
    }
    cfg.gen.seed = cfg.seed;
    return generate_instance(cfg.gen);
}

json design_to_json(const NetworkDesign& d) {
    json out;
    json hubs = json::array();
    int total = 0;
    for (int t = 0; t < d.open.n2; ++t) {
        json period = json::array();
        for (int i = 0; i < d.open.n1; ++i)
            if (d.open(i, t) > 0.5) {
                period.push_back(i);
                ++total;
            }
        hubs.push_back(std::move(period));
    }
    out["hubs_per_period"] = std::move(hubs);
    out["open_count"] = total;
    out["regret"] = d.regret;
    return out;
}

std::string summary_base(const RunConfig& cfg, const char* command) {
    json doc;
    doc["schema"] = "prhr-summary/v1";
    doc["command"] = command;
    doc["seed"] = cfg.seed;
    doc["instance"] = {{"nodes", cfg.gen.n_nodes},
                       {"periods", cfg.gen.n_periods},
                       {"scenarios", cfg.gen.n_scenarios}};
    doc["weights"] = {{"theta1", cfg.gen.theta1}, {"theta2", cfg.gen.theta2}};
    doc["outputs"] = json::array();
    return doc.dump();
}

int finish_summary(const RunConfig& cfg, json doc, const std::vector<std::string>& outputs) {
    json arr = json::array();
    for (const auto& o : outputs) arr.push_back(o);
    doc["outputs"] = std::move(arr);
    const fs::path dir(cfg.out_dir);
    write_summary((dir / "summary.json").string(), doc.dump());
    write_manifest((dir / "manifest.json").string(), cfg);
    // verify everything landed
    for (const auto& o : outputs) {
        if (!fs::exists(dir / o)) {
            std::cerr << "missing expected output: " << o << "\n";
            return 1;
        }
    }
    return 0;
}

int cmd_gen(Cli& cli) {
    RunConfig& cfg = cli.cfg;
    cfg.command = "gen";
    cfg.gen.seed = cfg.seed;
    fs::create_directories(cfg.out_dir);
    Instance inst = generate_instance(cfg.gen);
    const fs::path path = fs::path(cfg.out_dir) / "instance.json";
    save_instance(inst, path.string());
    json doc = json::parse(summary_base(cfg, "gen"));
    doc["instance_file"] = path.string();
    doc["digest"] = config_digest(cfg);
    const int rc = finish_summary(cfg, doc, {"instance.json", "summary.json"});
    std::cout << path.string() << "\nnodes=" << cfg.gen.n_nodes
              << " periods=" << cfg.gen.n_periods << " scenarios=" << cfg.gen.n_scenarios
              << " seed=" << cfg.seed << " digest=" << config_digest(cfg) << "\n";
    return rc;
}

int cmd_solve(Cli& cli) {
    RunConfig& cfg = cli.cfg;
    cfg.command = "solve";
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    Instance inst = obtain_instance(cfg);
    auto ctx = make_context(inst);
    SolveReport rep = run_solve(ctx, cfg);

    const fs::path dir(cfg.out_dir);
    write_outer_trace_csv((dir / "trace_outer.csv").string(), rep.outer_trace);
    write_inner_trace_csv((dir / "trace_inner.csv").string(), rep.inner_trace,
                          solve_strategy_name(cfg.strategy));

    json doc = json::parse(summary_base(cfg, "solve"));
    doc["strategy"] = solve_strategy_name(cfg.strategy);
    doc["results"] = {{"lb", rep.lb},
                      {"ub", rep.ub},
                      {"gap", rep.gap},
                      {"objective", rep.objective}};
    if (rep.has_design) doc["design"] = design_to_json(rep.design);
    doc["bounds"] = {{"gamma_star", ctx.bounds.gamma_star},
                     {"gamma_max", ctx.bounds.gamma_max},
                     {"omega_star", ctx.bounds.omega_star},
                     {"omega_max", ctx.bounds.omega_max}};
    doc["totals"] = {{"outer_iterations", rep.outer_iterations},
                     {"inner_iterations", rep.inner_iterations},
                     {"nodes", rep.lp_or_master_nodes}};
    doc["wall_ms"] = rep.wall_ms;
    return finish_summary(cfg, doc,
                          {"trace_outer.csv", "trace_inner.csv", "summary.json"});
}

int cmd_saa(Cli& cli) {
    RunConfig& cfg = cli.cfg;
    cfg.command = "saa";
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    cfg.gen.seed = cfg.seed;
    const auto samples = parse_int_list(cli.samples_list, cfg.samples);
    const auto reps = parse_int_list(cli.replications_list, cfg.replications);
    cfg.samples = samples.front();
    cfg.replications = reps.front();

    struct Cell {
        int s, m;
        SaaReport rep;
        bool failed = false;
        std::string error;
        long wall_ms = 0;
    };
    std::vector<Cell> cells;
    for (int s : samples)
        for (int m : reps) cells.push_back({s, m, {}, false, "", 0});

    parallel_for(static_cast<int>(cells.size()), [&](int k) {
        auto t0 = std::chrono::steady_clock::now();
        SaaConfig sc;
        sc.sample_size = cells[k].s;
        sc.replications = cells[k].m;
        sc.reference_size = std::max(cfg.reference, cells[k].s + 1);
        sc.seed = cfg.seed;
        try {
            cells[k].rep = run_saa(cfg.gen, sc);
        } catch (const std::exception& e) {
            cells[k].failed = true;
            cells[k].error = e.what();
        }
        cells[k].wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
    });

    const fs::path dir(cfg.out_dir);
    {
        std::ofstream os(dir / "saa_grid.csv");
        os << "samples,replications,reference,mu_lb,var_lb,ub,var_ub,gap,var_gap,gap_pct,"
              "failed_replications,wall_ms\n";
        os.precision(12);
        for (const auto& c : cells) {
            if (c.failed) {
                os << c.s << ',' << c.m << ",,,,,,,,," << c.wall_ms << '\n';
                continue;
            }
            const auto& r = c.rep;
            const double gap_pct = 100.0 * r.gap / std::max(1e-12, std::abs(r.ub));
            os << c.s << ',' << c.m << ',' << std::max(cfg.reference, c.s + 1) << ','
               << r.mu_lb << ',' << r.var_lb << ',' << r.ub << ',' << r.var_ub << ','
               << r.gap << ',' << r.var_gap << ',' << gap_pct << ',' << r.failed_count << ','
               << c.wall_ms << '\n';
        }
    }
    // per-replication trace of the first grid cell
    if (!cells.empty() && !cells.front().failed)
        write_saa_replications_csv((dir / "saa_replications.csv").string(),
                                   cells.front().rep.rows);

    SaaConfig vss_cfg;
    vss_cfg.sample_size = samples.front();
    vss_cfg.replications = std::max(2, reps.front());
    vss_cfg.reference_size = std::max(cfg.reference, samples.front() + 1);
    vss_cfg.seed = cfg.seed;
    json vss_json;
    try {
        auto vss = compute_vss(cfg.gen, vss_cfg);
        vss_json = {{"rp", vss.rp}, {"eev", vss.eev}, {"vss", vss.vss}};
    } catch (const std::exception& e) {
        vss_json = {{"error", e.what()}};
    }

    json doc = json::parse(summary_base(cfg, "saa"));
    doc["results"] = {{"cells", cells.size()},
                      {"vss", vss_json},
                      {"grid_file", "saa_grid.csv"}};
    std::vector<std::string> outputs = {"saa_grid.csv", "summary.json"};
    if (fs::exists(dir / "saa_replications.csv")) outputs.push_back("saa_replications.csv");
    return finish_summary(cfg, doc, outputs);
}

int cmd_compare(Cli& cli) {
    RunConfig& cfg = cli.cfg;
    cfg.command = "compare";
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    Instance inst = obtain_instance(cfg);
    auto ctx = make_context(inst);

    // one decomposition run per cut strategy at zero multipliers: the quantity
    // of interest is the inner convergence behavior
    struct Row {
        CutStrategy strategy;
        BdReport rep;
        long wall_ms = 0;
    };
    std::vector<Row> rows;
    for (CutStrategy s :
         {CutStrategy::SBD, CutStrategy::MBD, CutStrategy::PBD, CutStrategy::MPBD})
        rows.push_back({s, {}, 0});
    parallel_for(static_cast<int>(rows.size()), [&](int k) {
        auto t0 = std::chrono::steady_clock::now();
        BdConfig bd;
        bd.strategy = rows[k].strategy;
        bd.eps_bd = cfg.eps_bd;
        bd.iter2_max = cfg.iter2_max;
        bd.lambda = cfg.lambda;
        bd.time_budget_s = cfg.time_max_s;
        rows[k].rep = run_benders(ctx, zero_multipliers(ctx), bd);
        rows[k].wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
    });

    const fs::path dir(cfg.out_dir);
    {
        std::ofstream os(dir / "compare.csv");
        os << "strategy,seed,iterations,final_gap,cuts,wall_ms\n";
        os.precision(12);
        for (const auto& r : rows)
            os << cut_strategy_name(r.strategy) << ',' << cfg.seed << ',' << r.rep.iterations
               << ',' << report_gap(r.rep.lb, r.rep.ub) << ','
               << (r.rep.cuts_optimality + r.rep.cuts_feasibility) << ',' << r.wall_ms << '\n';
    }
    {
        std::ofstream os(dir / "trace_inner.csv");
        os << "it_bd,lb_bd,ub_bd,gap,cuts_added,cuts_total,strategy\n";
        os.precision(12);
        for (const auto& r : rows)
            for (const auto& t : r.rep.trace)
                os << t.it_bd << ',' << t.lb << ',' << t.ub << ',' << t.gap << ','
                   << t.cuts_added << ',' << t.cuts_total << ','
                   << cut_strategy_name(r.strategy) << '\n';
    }
    json doc = json::parse(summary_base(cfg, "compare"));
    json per = json::array();
    for (const auto& r : rows)
        per.push_back({{"strategy", cut_strategy_name(r.strategy)},
                       {"iterations", r.rep.iterations},
                       {"lb", r.rep.lb},
                       {"ub", r.rep.ub},
                       {"converged", r.rep.converged},
                       {"wall_ms", r.wall_ms}});
    doc["results"] = {{"strategies", per}};
    return finish_summary(cfg, doc, {"compare.csv", "trace_inner.csv", "summary.json"});
}

int cmd_failure_sim(Cli& cli) {
    RunConfig& cfg = cli.cfg;
    cfg.command = "failure-sim";
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    Instance inst = obtain_instance(cfg);
    auto ctx = make_context(inst);

    // risk-aware design under the configured weights
    ExactOptions risk_aware;
    risk_aware.time_budget_s = cfg.time_max_s;
    auto aware = solve_exact(ctx, risk_aware);
    // risk-free baseline: cost objective only, regret rows dropped
    ExactOptions risk_free;
    risk_free.theta_override = {{0.0, 1.0}};
    risk_free.risk_rows = false;
    risk_free.time_budget_s = cfg.time_max_s;
    auto free_res = solve_exact(ctx, risk_free);

    FailureSimConfig sim;
    sim.n_scenarios = cfg.failure_scenarios;
    sim.failure_probability = cfg.failure_prob;
    sim.seed = cfg.seed;
    auto aware_sim = simulate_failures(aware.design, inst, sim);
    auto free_sim = simulate_failures(free_res.design, inst, sim);

    const fs::path dir(cfg.out_dir);
    write_failure_csv((dir / "failure.csv").string(), aware_sim);
    write_failure_csv((dir / "failure_baseline.csv").string(), free_sim);

    auto hub_count = [](const NetworkDesign& d) {
        int n = 0;
        for (double v : d.open.v)
            if (v > 0.5) ++n;
        return n;
    };
    json doc = json::parse(summary_base(cfg, "failure-sim"));
    doc["results"] = {{"risk_aware",
                       {{"unserved_total", aware_sim.total_unserved},
                        {"hubs", hub_count(aware.design)}}},
                      {"risk_free",
                       {{"unserved_total", free_sim.total_unserved},
                        {"hubs", hub_count(free_res.design)}}},
                      {"failure_prob", cfg.failure_prob},
                      {"simulations", cfg.failure_scenarios}};
    return finish_summary(cfg, doc,
                          {"failure.csv", "failure_baseline.csv", "summary.json"});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"p-robust hub location: generation, decomposition solvers, studies"};
    app.require_subcommand(1);
    Cli cli;
    std::string strategy_name = "mpbd";

    auto* gen = app.add_subcommand("gen", "generate an instance file");
    auto* solve = app.add_subcommand("solve", "solve one instance");
    auto* saa = app.add_subcommand("saa", "sample-average study grid");
    auto* compare = app.add_subcommand("compare", "compare the four cut strategies");
    auto* failure = app.add_subcommand("failure-sim", "failure simulation vs risk-free design");
    for (auto* sub : {gen, solve, saa, compare, failure}) {
        auto& c = cli.cfg;
        sub->add_option("--nodes", c.gen.n_nodes);
        sub->add_option("--periods", c.gen.n_periods);
        sub->add_option("--scenarios", c.gen.n_scenarios);
        sub->add_option("--seed", c.seed);
        sub->add_option("--theta1", c.gen.theta1);
        sub->add_option("--theta2", c.gen.theta2);
        sub->add_option("--tau", c.gen.tau);
        sub->add_option("--eps-lr", c.eps_lr);
        sub->add_option("--eps-bd", c.eps_bd);
        sub->add_option("--iter1-max", c.iter1_max);
        sub->add_option("--iter2-max", c.iter2_max);
        sub->add_option("--time-max", c.time_max_s);
        sub->add_option("--samples", cli.samples_list);
        sub->add_option("--replications", cli.replications_list);
        sub->add_option("--reference", c.reference);
        sub->add_option("--failure-prob", c.failure_prob);
        sub->add_option("--failure-scenarios", c.failure_scenarios);
        sub->add_option("--instance", c.instance_path);
        sub->add_option("--strategy", strategy_name);
        sub->add_option("--out", c.out_dir);
    }

    CLI11_PARSE(app, argc, argv);
    try {
        cli.cfg.strategy = parse_strategy(strategy_name);
        if (gen->parsed()) return cmd_gen(cli);
        if (solve->parsed()) return cmd_solve(cli);
        if (saa->parsed()) return cmd_saa(cli);
        if (compare->parsed()) return cmd_compare(cli);
        if (failure->parsed()) return cmd_failure_sim(cli);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
