#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fedbud/fedbud.hpp"

namespace fs = std::filesystem;
using namespace fedbud;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::string command = "simulate";
    bool oracle = false;
    bool debug_fixed_point = false;
};

struct OracleStats {
    int rounds_checked = 0;
    int failures = 0;
    double max_relative_error = 0.0;
    double max_follower_improvement = 0.0;
    double max_leader_improvement = 0.0;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

int run_single(const SystemConfig& cfg, const Options& opt, bool train) {
    const std::uint64_t seed = cfg.seed;
    const ResolvedGame game = resolve_game(cfg, seed);

    std::vector<std::vector<FixedPointTracePoint>> traces;
    OracleStats oracle;
    RunOptions ro;
    ro.train = train;
    if (opt.debug_fixed_point) ro.fixed_point_traces = &traces;
    if (opt.oracle) {
        ro.on_equilibrium = [&](int, const RoundContext& ctx, const EquilibriumResult& eq) {
            if (!eq.converged) return;
            double ref;
            double tol;
            if (eq.clamp_count == 0) {
                ref = solve_reduced_fixed_point(ReducedMapConstants::from_context(ctx));
                tol = 1e-6;
            } else {
                ref = brute_force_equilibrium(ctx).phi;
                tol = 1e-5;
            }
            const double rel = std::abs(eq.phi_star - ref) / std::abs(ref);
            const auto nash = verify_nash(eq, ctx);
            ++oracle.rounds_checked;
            oracle.max_relative_error = std::max(oracle.max_relative_error, rel);
            oracle.max_follower_improvement = std::max(oracle.max_follower_improvement, nash.max_follower_improvement);
            oracle.max_leader_improvement = std::max(oracle.max_leader_improvement, nash.leader_improvement);
            if (rel > tol || !nash.verdict) ++oracle.failures;
        };
    }

    const TrajectoryLog log = run_experiment(cfg, game, seed, ro);
    const RunSummary s = summarize(log, cfg.lc);

    std::ostringstream csv;
    write_trajectory_csv(csv, log);
    write_text((fs::path(opt.out) / "trajectory.csv").string(), csv.str());

    json j = summary_json(s, log);
    if (opt.oracle)
        j["oracle"] = {{"rounds_checked", oracle.rounds_checked},
                       {"failures", oracle.failures},
                       {"max_relative_error", oracle.max_relative_error},
                       {"max_follower_improvement", oracle.max_follower_improvement},
                       {"max_leader_relative_improvement", oracle.max_leader_improvement}};
    write_text((fs::path(opt.out) / "summary.json").string(), dump(j));

    if (opt.debug_fixed_point) {
        std::ostringstream tr;
        write_fixed_point_trace(tr, traces);
        write_text((fs::path(opt.out) / "fixed_point_trace.csv").string(), tr.str());
    }
    if (train && cfg.write_task_snapshot) {
        TaskSpec ts{cfg.lc.dim, cfg.nodes, cfg.pool_size, cfg.shift, cfg.label_noise, cfg.lc.rho, cfg.lc.mu};
        std::ostringstream snap;
        write_task_snapshot(snap, generate_task(ts, seed));
        write_text((fs::path(opt.out) / "task_snapshot.csv").string(), snap.str());
    }

    if (log.aborted_round) {
        std::cerr << "error: equilibrium did not converge at round " << *log.aborted_round << '\n';
        return 2;
    }
    if (!s.all_converged) {
        std::cerr << "error: " << s.carried_forward_rounds
                  << " round(s) did not converge and carried the previous strategies forward\n";
        return 2;
    }
    if (opt.oracle && oracle.failures > 0) {
        std::cerr << "error: oracle cross-check failed in " << oracle.failures << " round(s)\n";
        return 3;
    }
    return 0;
}

int run_sweep_gamma1(const SystemConfig& cfg, const Options& opt) {
    const auto points = sweep_gamma1(cfg);
    std::ostringstream table;
    table << "factor,mean_gamma1,mean_total_payment,mean_terminal_gap,seeds,all_converged\n";
    bool ok = true;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        double mean_g = 0.0;
        for (double g : p.gamma1) mean_g += g / p.gamma1.size();
        json j = {{"factor", p.factor},
                  {"seeds", sweep_seed_list(cfg)},
                  {"gamma1", p.gamma1},
                  {"total_payment", p.total_payment},
                  {"terminal_gap", p.terminal_gap},
                  {"mean_total_payment", p.mean_total_payment},
                  {"mean_terminal_gap", p.mean_terminal_gap},
                  {"all_converged", p.all_converged}};
        const fs::path dir = fs::path(opt.out) / "sweep_gamma1" / ("point_" + std::to_string(i));
        fs::create_directories(dir);
        write_text((dir / "summary.json").string(), dump(j));
        table << format_double(p.factor) << ',' << format_double(mean_g) << ','
              << format_double(p.mean_total_payment) << ',' << format_double(p.mean_terminal_gap) << ','
              << p.total_payment.size() << ',' << (p.all_converged ? "true" : "false") << '\n';
        ok = ok && p.all_converged;
    }
    write_text((fs::path(opt.out) / "sweep_gamma1.csv").string(), table.str());
    std::cout << table.str();
    return ok ? 0 : 2;
}

int run_sweep_n(const SystemConfig& cfg, const Options& opt) {
    const auto points = sweep_nodes(cfg);
    std::ostringstream table;
    table << "nodes,mean_total_payment,mean_server_cost,mean_node_utility,mean_terminal_gap,seeds,all_converged\n";
    bool ok = true;
    for (const auto& p : points) {
        json runs = json::array();
        for (const auto& s : p.runs)
            runs.push_back({{"total_payment", s.total_payment},
                            {"server_cost", s.server_cost},
                            {"mean_node_utility", s.mean_node_utility},
                            {"terminal_gap", nan_to_null(s.terminal_gap)},
                            {"terminal_bound", nan_to_null(s.terminal_bound)},
                            {"gamma1", s.gamma1},
                            {"all_converged", s.all_converged}});
        json j = {{"nodes", p.nodes},
                  {"seeds", sweep_seed_list(cfg)},
                  {"runs", runs},
                  {"mean_total_payment", p.mean_total_payment},
                  {"mean_server_cost", p.mean_server_cost},
                  {"mean_node_utility", p.mean_node_utility},
                  {"mean_terminal_gap", p.mean_terminal_gap},
                  {"all_converged", p.all_converged}};
        const fs::path dir = fs::path(opt.out) / "sweep_n" / ("nodes_" + std::to_string(p.nodes));
        fs::create_directories(dir);
        write_text((dir / "summary.json").string(), dump(j));
        table << p.nodes << ',' << format_double(p.mean_total_payment) << ','
              << format_double(p.mean_server_cost) << ',' << format_double(p.mean_node_utility) << ','
              << format_double(p.mean_terminal_gap) << ',' << p.runs.size() << ','
              << (p.all_converged ? "true" : "false") << '\n';
        ok = ok && p.all_converged;
    }
    write_text((fs::path(opt.out) / "sweep_n.csv").string(), table.str());
    std::cout << table.str();
    return ok ? 0 : 2;
}

int run_compare(const SystemConfig& cfg, const Options& opt) {
    std::vector<BaselineComparison> rows;
    for (int n : cfg.sweep_nodes) rows.push_back(compare_baselines(cfg, n, cfg.seed));
    const auto trend = check_node_trend(rows);
    json j;
    j["seed"] = cfg.seed;
    j["comparisons"] = json::array();
    std::ostringstream table;
    table << "nodes,strategy,server_cost,mean_node_utility,mean_node_penalized_utility,nodes_dominated,server_dominated\n";
    bool ok = true;
    for (const auto& r : rows) {
        j["comparisons"].push_back(comparison_json(r));
        table << r.nodes << ",equilibrium," << format_double(r.eq_server_cost) << ','
              << format_double(r.eq_mean_node_raw) << ',' << format_double(r.eq_mean_node_penalized)
              << ',' << r.nodes << ",true\n";
        for (const auto& b : r.baselines)
            table << r.nodes << ',' << b.name << ',' << format_double(b.server_cost) << ','
                  << format_double(b.mean_node_raw) << ',' << format_double(b.mean_node_penalized) << ','
                  << b.nodes_dominated << ',' << (b.server_dominated ? "true" : "false") << '\n';
        ok = ok && r.converged;
    }
    j["utility_non_increasing_in_n"] = trend.utility_non_increasing;
    j["server_cost_non_increasing_in_n"] = trend.cost_non_increasing;
    write_text((fs::path(opt.out) / "compare_baselines.json").string(), dump(j));
    write_text((fs::path(opt.out) / "compare_baselines.csv").string(), table.str());
    std::cout << table.str();
    return ok ? 0 : 2;
}

int run_verify(const SystemConfig& cfg, const Options& opt) {
    json report;
    report["seed"] = cfg.seed;
    report["instances"] = json::array();
    bool ok = true;
    for (int i = 0; i < cfg.verify_instances; ++i) {
        const auto inst = random_instance(cfg.seed, static_cast<std::uint32_t>(i));
        const auto v = verify_round(static_cast<std::size_t>(i), inst.context(), cfg.eq);
        report["instances"].push_back(verify_json(v));
        ok = ok && v.pass;
    }
    const ResolvedGame game = resolve_game(cfg, cfg.seed);
    std::vector<VirtualQueuePair> queues(game.profiles.size());
    const RoundContext ctx{game.profiles, queues, game.kappas, cfg.lc, game.weights, 0, cfg.horizon};
    const auto v = verify_round(0, ctx, cfg.eq);
    report["config_round0"] = verify_json(v);
    ok = ok && v.pass;
    report["all_pass"] = ok;
    const std::string text = dump(report);
    write_text((fs::path(opt.out) / "verify.json").string(), text);
    std::cout << text;
    return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedbud: incentive-mechanism simulator for privacy-aware federated learning"};
    Options opt;
    app.add_option("--config", opt.config, "flat-key JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", opt.seed, "override the configured seed");
    app.add_option("--out", opt.out, "output directory");
    app.add_option("--command", opt.command, "what to run")
        ->check(CLI::IsMember({"simulate", "equilibrium-only", "sweep-gamma1", "sweep-n",
                               "compare-baselines", "verify"}));
    app.add_flag("--oracle", opt.oracle, "cross-check every round against the brute-force oracles");
    app.add_flag("--debug-fixed-point", opt.debug_fixed_point, "write the per-iteration fixed-point trace");
    CLI11_PARSE(app, argc, argv);

    try {
        SystemConfig cfg = opt.config.empty() ? SystemConfig{} : load_config(opt.config);
        if (opt.seed) cfg.seed = *opt.seed;
        cfg.validate();
        fs::create_directories(opt.out);

        if (opt.command == "simulate") return run_single(cfg, opt, true);
        if (opt.command == "equilibrium-only") return run_single(cfg, opt, false);
        if (opt.command == "sweep-gamma1") return run_sweep_gamma1(cfg, opt);
        if (opt.command == "sweep-n") return run_sweep_n(cfg, opt);
        if (opt.command == "compare-baselines") return run_compare(cfg, opt);
        return run_verify(cfg, opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 64;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
