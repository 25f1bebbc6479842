#pragma once

// Experiment drivers behind the command-line tool: run summaries, CSV and
// JSON writers, gamma1 / node-count sweeps, baseline comparisons and the
// random-instance verification suite.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "fedbud/config.hpp"
#include "fedbud/economics.hpp"
#include "fedbud/equilibrium.hpp"
#include "fedbud/fl_sim.hpp"
#include "fedbud/oracle.hpp"

namespace fedbud {

using json = nlohmann::json;

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline const char* trajectory_header() {
    return "t,phi,R,node_id,B,eps,Q,Z,payment,node_cost,utility_inc,sigma,lambda,bound_t,gap_t";
}

inline void write_trajectory_csv(std::ostream& os, const TrajectoryLog& log) {
    os << trajectory_header() << '\n';
    for (const auto& r : log.rounds) {
        for (std::size_t k = 0; k < r.nodes.size(); ++k) {
            const auto& n = r.nodes[k];
            os << r.t << ',' << format_double(r.phi) << ',' << format_double(r.r) << ',' << k << ','
               << format_double(n.b) << ',' << format_double(n.eps) << ',' << format_double(n.q)
               << ',' << format_double(n.z) << ',' << format_double(n.payment) << ','
               << format_double(n.cost) << ',' << format_double(n.utility_inc) << ','
               << format_double(n.sigma) << ',' << format_double(n.lambda) << ','
               << format_double(r.bound) << ',' << format_double(r.gap) << '\n';
        }
    }
}

inline void write_fixed_point_trace(std::ostream& os,
                                    const std::vector<std::vector<FixedPointTracePoint>>& traces) {
    os << "t,iteration,phi,R\n";
    for (std::size_t t = 0; t < traces.size(); ++t)
        for (const auto& p : traces[t])
            os << t << ',' << p.iteration << ',' << format_double(p.phi) << ',' << format_double(p.r)
               << '\n';
}

inline void write_task_snapshot(std::ostream& os, const SyntheticTask& task) {
    os << "node,y";
    for (int j = 0; j < task.dim; ++j) os << ",x" << j;
    os << '\n';
    for (std::size_t k = 0; k < task.pools.size(); ++k) {
        const auto& p = task.pools[k];
        for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
            os << k << ',' << format_double(p.y(i));
            for (Eigen::Index j = 0; j < p.x.cols(); ++j) os << ',' << format_double(p.x(i, j));
            os << '\n';
        }
    }
    os << "w_star";
    for (Eigen::Index j = 0; j < task.w_star.size(); ++j) os << ',' << format_double(task.w_star(j));
    os << '\n';
}

struct RunSummary {
    int rounds_completed = 0;
    bool all_converged = false;
    std::optional<int> aborted_round;
    int carried_forward_rounds = 0;
    double total_payment = 0.0;
    double server_cost = 0.0;
    double terminal_gap = std::numeric_limits<double>::quiet_NaN();
    double terminal_bound = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> node_utilities;
    double mean_node_utility = 0.0;
    std::vector<double> queue_max_q;
    std::vector<double> queue_max_z;
    double max_q = 0.0;
    double max_z = 0.0;
    std::vector<double> violation_b;    // (sum_t B^2 - n_k) / n_k
    std::vector<double> violation_eps;  // (sum_t eps^2 - m_k) / m_k
    double max_violation_b = -std::numeric_limits<double>::infinity();
    double max_violation_eps = -std::numeric_limits<double>::infinity();
    int iterations_min = 0;
    int iterations_max = 0;
    double iterations_mean = 0.0;
    int clamp_events = 0;
    double gamma1 = 0.0;
    bool gamma1_auto = false;
};

inline RunSummary summarize(const TrajectoryLog& log, const LearningConstants& lc) {
    RunSummary s;
    const std::size_t n = log.profiles.size();
    s.rounds_completed = static_cast<int>(log.rounds.size());
    s.all_converged = log.all_converged();
    s.aborted_round = log.aborted_round;
    s.gamma1 = log.weights.gamma1;
    s.gamma1_auto = log.gamma1_auto;
    s.node_utilities.assign(n, 0.0);
    s.queue_max_q.assign(n, 0.0);
    s.queue_max_z.assign(n, 0.0);
    std::vector<double> used_b(n, 0.0), used_e(n, 0.0);
    s.iterations_min = std::numeric_limits<int>::max();
    long total_iters = 0;
    for (const auto& r : log.rounds) {
        s.total_payment += r.r;
        std::vector<NodeStrategy> strategies(n);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& nr = r.nodes[k];
            strategies[k] = {nr.b, nr.eps};
            s.node_utilities[k] += nr.utility_inc;
            s.queue_max_q[k] = std::max(s.queue_max_q[k], nr.q);
            s.queue_max_z[k] = std::max(s.queue_max_z[k], nr.z);
            used_b[k] += nr.b * nr.b;
            used_e[k] += nr.eps * nr.eps;
            if (nr.clamped) ++s.clamp_events;
        }
        s.server_cost += server_round_cost(r.t, log.horizon, r.r, strategies, log.kappas, lc, log.weights);
        s.iterations_min = std::min(s.iterations_min, r.iterations);
        s.iterations_max = std::max(s.iterations_max, r.iterations);
        total_iters += r.iterations;
        if (r.carried_forward) ++s.carried_forward_rounds;
    }
    if (log.rounds.empty()) s.iterations_min = 0;
    s.iterations_mean = log.rounds.empty() ? 0.0 : static_cast<double>(total_iters) / log.rounds.size();
    if (!log.rounds.empty()) {
        s.terminal_gap = log.rounds.back().gap;
        s.terminal_bound = log.rounds.back().bound;
    }
    for (std::size_t k = 0; k < n; ++k) {
        s.mean_node_utility += s.node_utilities[k] / static_cast<double>(n);
        s.max_q = std::max(s.max_q, s.queue_max_q[k]);
        s.max_z = std::max(s.max_z, s.queue_max_z[k]);
        const auto& p = log.profiles[k];
        s.violation_b.push_back((used_b[k] - p.n_cap) / p.n_cap);
        s.violation_eps.push_back((used_e[k] - p.m_cap) / p.m_cap);
        s.max_violation_b = std::max(s.max_violation_b, s.violation_b.back());
        s.max_violation_eps = std::max(s.max_violation_eps, s.violation_eps.back());
    }
    return s;
}

inline json nan_to_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json summary_json(const RunSummary& s, const TrajectoryLog& log) {
    json j;
    j["seed"] = log.seed;
    j["horizon"] = log.horizon;
    j["nodes"] = log.profiles.size();
    j["trained"] = log.trained;
    j["rounds_completed"] = s.rounds_completed;
    j["all_converged"] = s.all_converged;
    j["aborted_round"] = s.aborted_round ? json(*s.aborted_round) : json(nullptr);
    j["carried_forward_rounds"] = s.carried_forward_rounds;
    j["total_payment"] = s.total_payment;
    j["server_cost"] = s.server_cost;
    j["initial_gap"] = nan_to_null(log.e0);
    j["terminal_gap"] = nan_to_null(s.terminal_gap);
    j["terminal_bound"] = nan_to_null(s.terminal_bound);
    j["node_utilities"] = s.node_utilities;
    j["mean_node_utility"] = s.mean_node_utility;
    j["queue_max_q"] = s.queue_max_q;
    j["queue_max_z"] = s.queue_max_z;
    j["max_q"] = s.max_q;
    j["max_z"] = s.max_z;
    j["violation_ratio_b"] = s.violation_b;
    j["violation_ratio_eps"] = s.violation_eps;
    j["max_violation_ratio_b"] = s.max_violation_b;
    j["max_violation_ratio_eps"] = s.max_violation_eps;
    j["iterations"] = {{"min", s.iterations_min}, {"max", s.iterations_max}, {"mean", s.iterations_mean}};
    j["clamp_events"] = s.clamp_events;
    j["gamma1"] = s.gamma1;
    j["gamma1_auto"] = s.gamma1_auto;
    j["gamma2"] = log.weights.gamma2;
    std::vector<double> n_caps, m_caps;
    for (const auto& p : log.profiles) {
        n_caps.push_back(p.n_cap);
        m_caps.push_back(p.m_cap);
    }
    j["n_cap"] = n_caps;
    j["m_cap"] = m_caps;
    return j;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

/// Seeds used by the multi-seed commands: seed, seed+1, ...
inline std::vector<std::uint64_t> sweep_seed_list(const SystemConfig& cfg) {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < cfg.sweep_seeds; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
    return seeds;
}

struct Gamma1SweepPoint {
    double factor = 1.0;
    std::vector<double> gamma1;
    std::vector<double> total_payment;
    std::vector<double> terminal_gap;
    double mean_total_payment = 0.0;
    double mean_terminal_gap = 0.0;
    bool all_converged = true;
};

/// Each seed resolves its own game once; gamma1 is then scaled by the
/// factor with profiles and budgets held fixed.
inline std::vector<Gamma1SweepPoint> sweep_gamma1(const SystemConfig& cfg) {
    std::vector<Gamma1SweepPoint> points(cfg.sweep_gamma1_factors.size());
    for (std::size_t i = 0; i < points.size(); ++i) points[i].factor = cfg.sweep_gamma1_factors[i];
    for (auto seed : sweep_seed_list(cfg)) {
        const ResolvedGame base = resolve_game(cfg, seed);
        for (auto& pt : points) {
            ResolvedGame game = base;
            game.weights.gamma1 = base.weights.gamma1 * pt.factor;
            const auto log = run_experiment(cfg, game, seed);
            const auto s = summarize(log, cfg.lc);
            pt.gamma1.push_back(game.weights.gamma1);
            pt.total_payment.push_back(s.total_payment);
            pt.terminal_gap.push_back(s.terminal_gap);
            pt.all_converged = pt.all_converged && s.all_converged;
        }
    }
    for (auto& pt : points) {
        for (std::size_t i = 0; i < pt.total_payment.size(); ++i) {
            pt.mean_total_payment += pt.total_payment[i] / pt.total_payment.size();
            pt.mean_terminal_gap += pt.terminal_gap[i] / pt.terminal_gap.size();
        }
    }
    return points;
}

/// Config with a different node count and gamma1 pinned to the value the
/// base config resolves to for `seed`.
inline SystemConfig with_nodes(const SystemConfig& cfg, int nodes, std::uint64_t seed) {
    SystemConfig out = cfg;
    if (!out.gamma1) out.gamma1 = resolve_game(cfg, seed).weights.gamma1;
    out.nodes = nodes;
    return out;
}

struct NodeSweepPoint {
    int nodes = 0;
    std::vector<RunSummary> runs;
    double mean_total_payment = 0.0;
    double mean_server_cost = 0.0;
    double mean_node_utility = 0.0;
    double mean_terminal_gap = 0.0;
    bool all_converged = true;
};

inline std::vector<NodeSweepPoint> sweep_nodes(const SystemConfig& cfg, bool train = true) {
    std::vector<NodeSweepPoint> points;
    for (int n : cfg.sweep_nodes) points.push_back({n, {}, 0.0, 0.0, 0.0, 0.0, true});
    for (auto seed : sweep_seed_list(cfg)) {
        for (auto& pt : points) {
            const SystemConfig c = with_nodes(cfg, pt.nodes, seed);
            RunOptions opts;
            opts.train = train;
            const auto log = run_experiment(c, seed, opts);
            pt.runs.push_back(summarize(log, c.lc));
            pt.all_converged = pt.all_converged && pt.runs.back().all_converged;
        }
    }
    for (auto& pt : points) {
        const double m = static_cast<double>(pt.runs.size());
        for (const auto& s : pt.runs) {
            pt.mean_total_payment += s.total_payment / m;
            pt.mean_server_cost += s.server_cost / m;
            pt.mean_node_utility += s.mean_node_utility / m;
            pt.mean_terminal_gap += s.terminal_gap / m;
        }
    }
    return points;
}

// ---------------------------------------------------------------------------
// Baseline comparison on the equilibrium path of a game-only run.

/// Sum over rounds of P - E - (Q/gamma2)(b^2 - n/T) - (Z/gamma2)(eps^2 - m/T), with
/// the queues taken from the equilibrium path. This is the horizon objective
/// the per-slot transform optimises.
struct NodeScore {
    double raw = 0.0;
    double penalized = 0.0;
};

inline NodeScore score_node(const TrajectoryLog& eq_log, std::size_t k,
                            std::span<const NodeStrategy> schedule, double gamma2) {
    NodeScore sc;
    const auto& p = eq_log.profiles[k];
    const auto budget = PerRoundBudget::from_profile(p, eq_log.horizon);
    for (std::size_t t = 0; t < eq_log.rounds.size(); ++t) {
        const auto& r = eq_log.rounds[t];
        std::vector<NodeStrategy> all(r.nodes.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = {r.nodes[i].b, r.nodes[i].eps};
        all[k] = schedule[t];
        const double pay = allocate_payment(all, r.r)[k].amount;
        const double cost = node_round_cost(schedule[t], p);
        const double b2 = schedule[t].b * schedule[t].b;
        const double e2 = schedule[t].eps * schedule[t].eps;
        const auto& nr = r.nodes[k];
        sc.raw += pay - cost;
        sc.penalized += pay - cost - nr.q / gamma2 * (b2 - budget.n_slot) -
                        nr.z / gamma2 * (e2 - budget.m_slot);
    }
    return sc;
}

struct BaselineOutcome {
    std::string name;
    double server_cost = 0.0;
    double mean_node_raw = 0.0;
    double mean_node_penalized = 0.0;
    int nodes_dominated = 0;  // nodes whose equilibrium penalized utility >= baseline
    bool server_dominated = false;
    bool nodes_all_dominated = false;
};

struct BaselineComparison {
    int nodes = 0;
    double gamma1 = 0.0;
    bool converged = false;
    double eq_server_cost = 0.0;
    double eq_mean_node_raw = 0.0;
    double eq_mean_node_penalized = 0.0;
    double eq_max_violation = 0.0;
    std::vector<BaselineOutcome> baselines;
};

inline std::vector<BaselineSpec> baseline_specs(const SystemConfig& cfg, double matched,
                                                std::vector<std::string>* names) {
    std::vector<BaselineSpec> specs;
    for (double f : cfg.baseline_constant_factors) {
        specs.push_back({BaselineKind::constant, matched, f});
        if (names) names->push_back("constant_x" + format_double(f));
    }
    specs.push_back({BaselineKind::random, matched, 0.5});
    if (names) names->push_back("random");
    return specs;
}

inline BaselineComparison compare_baselines(const SystemConfig& cfg, int nodes, std::uint64_t seed) {
    const SystemConfig c = with_nodes(cfg, nodes, seed);
    const ResolvedGame game = resolve_game(c, seed);
    RunOptions opts;
    opts.train = false;
    const TrajectoryLog log = run_experiment(c, game, seed, opts);
    const auto summary = summarize(log, c.lc);

    BaselineComparison out;
    out.nodes = nodes;
    out.gamma1 = game.weights.gamma1;
    out.converged = summary.all_converged;
    out.eq_server_cost = summary.server_cost;
    out.eq_max_violation = std::max(summary.max_violation_b, summary.max_violation_eps);
    if (!out.converged) return out;

    const int horizon = c.horizon;
    const std::size_t n = game.profiles.size();
    std::vector<NodeScore> eq_scores(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<NodeStrategy> sched(static_cast<std::size_t>(horizon));
        for (int t = 0; t < horizon; ++t)
            sched[t] = {log.rounds[t].nodes[k].b, log.rounds[t].nodes[k].eps};
        eq_scores[k] = score_node(log, k, sched, game.weights.gamma2);
        out.eq_mean_node_raw += eq_scores[k].raw / n;
        out.eq_mean_node_penalized += eq_scores[k].penalized / n;
    }

    double mean_r = 0.0;
    for (const auto& r : log.rounds) mean_r += r.r / horizon;

    std::vector<std::string> names;
    const auto r_specs = baseline_specs(c, mean_r, &names);
    for (std::size_t bi = 0; bi < r_specs.size(); ++bi) {
        BaselineOutcome bo;
        bo.name = names[bi];
        // server side: nodes best-respond to the baseline payment at the
        // equilibrium phi and queues of each round
        const auto r_sched = make_baseline_schedule(r_specs[bi], horizon, seed, static_cast<std::uint32_t>(n));
        for (int t = 0; t < horizon; ++t) {
            const auto& rec = log.rounds[t];
            std::vector<NodeStrategy> resp(n);
            for (std::size_t k = 0; k < n; ++k)
                resp[k] = node_best_response(r_sched[t], rec.phi, game.profiles[k], rec.nodes[k].q,
                                             rec.nodes[k].z, game.weights);
            bo.server_cost += server_round_cost(t, horizon, r_sched[t], resp, game.kappas, c.lc, game.weights);
        }
        bo.server_dominated = out.eq_server_cost <= bo.server_cost * (1.0 + 1e-12);

        // node side: one node at a time deviates to a schedule with matched averages
        for (std::size_t k = 0; k < n; ++k) {
            double mb = 0.0, me = 0.0;
            for (const auto& r : log.rounds) {
                mb += r.nodes[k].b / horizon;
                me += r.nodes[k].eps / horizon;
            }
            BaselineSpec sb = r_specs[bi], se = r_specs[bi];
            sb.matched_average = mb;
            se.matched_average = me;
            const auto bs = make_baseline_schedule(sb, horizon, seed, static_cast<std::uint32_t>(2 * k));
            const auto es = make_baseline_schedule(se, horizon, seed, static_cast<std::uint32_t>(2 * k + 1));
            std::vector<NodeStrategy> sched(static_cast<std::size_t>(horizon));
            for (int t = 0; t < horizon; ++t) {
                sched[t] = {bs[t], es[t]};
                apply_domain_clamp(sched[t]);
            }
            const NodeScore sc = score_node(log, k, sched, game.weights.gamma2);
            bo.mean_node_raw += sc.raw / n;
            bo.mean_node_penalized += sc.penalized / n;
            const double slack = 1e-12 * std::max(1.0, std::abs(eq_scores[k].penalized));
            if (eq_scores[k].penalized >= sc.penalized - slack) ++bo.nodes_dominated;
        }
        bo.nodes_all_dominated = bo.nodes_dominated == static_cast<int>(n);
        out.baselines.push_back(bo);
    }
    return out;
}

inline json comparison_json(const BaselineComparison& c) {
    json j;
    j["nodes"] = c.nodes;
    j["gamma1"] = c.gamma1;
    j["converged"] = c.converged;
    j["equilibrium"] = {{"server_cost", c.eq_server_cost},
                        {"mean_node_utility", c.eq_mean_node_raw},
                        {"mean_node_penalized_utility", c.eq_mean_node_penalized},
                        {"max_violation_ratio", c.eq_max_violation}};
    json bl = json::array();
    for (const auto& b : c.baselines)
        bl.push_back({{"name", b.name},
                      {"server_cost", b.server_cost},
                      {"mean_node_utility", b.mean_node_raw},
                      {"mean_node_penalized_utility", b.mean_node_penalized},
                      {"nodes_dominated", b.nodes_dominated},
                      {"server_dominated", b.server_dominated},
                      {"nodes_all_dominated", b.nodes_all_dominated}});
    j["baselines"] = bl;
    return j;
}

/// Mean utility and server cost are non-increasing across the comparison
/// list (ordered by node count), allowing `slack` relative increase.
struct TrendCheck {
    bool utility_non_increasing = true;
    bool cost_non_increasing = true;
};

inline TrendCheck check_node_trend(const std::vector<BaselineComparison>& rows, double slack = 0.01) {
    TrendCheck tc;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& a = rows[i - 1];
        const auto& b = rows[i];
        if (b.eq_mean_node_raw > a.eq_mean_node_raw + slack * std::abs(a.eq_mean_node_raw))
            tc.utility_non_increasing = false;
        if (b.eq_server_cost > a.eq_server_cost + slack * std::abs(a.eq_server_cost))
            tc.cost_non_increasing = false;
    }
    return tc;
}

// ---------------------------------------------------------------------------
// Random single-round instances.

struct RandomInstance {
    std::vector<NodeProfile> profiles;
    std::vector<VirtualQueuePair> queues;
    LearningConstants lc;
    KappaSet kappas;
    GameWeights weights;

    RoundContext context() const { return {profiles, queues, kappas, lc, weights, 0, 1}; }
};

/// N in 1..max_nodes; alpha, beta, Q, Z, gamma1, gamma2 log-uniform in
/// [1e-2, 1e2]; the accuracy weight kappa3 eta^2 C^2 log-uniform in [1e-2, 1e2].
inline RandomInstance random_instance(std::uint64_t seed, std::uint32_t index, int max_nodes = 50) {
    PhiloxStream rng(seed, index, 0, StreamPurpose::instances);
    auto logu = [&] { return std::exp(rng.uniform(std::log(1e-2), std::log(1e2))); };
    RandomInstance inst;
    const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_nodes)));
    inst.lc = {0.5, 1.0, 1.0, 1.0, 2};
    inst.lc.big_c = 2.0 * std::sqrt(logu());  // kappa3 eta^2 C^2 = C^2 / 4
    inst.kappas = {0.5, 0.25, 1.0};
    inst.weights = {logu(), logu()};
    for (int k = 0; k < n; ++k) {
        NodeProfile p;
        p.alpha = logu();
        p.beta = logu();
        p.n_cap = 1.0;
        p.m_cap = 1.0;
        inst.profiles.push_back(p);
        inst.queues.push_back({logu(), logu()});
    }
    return inst;
}

struct VerifyRecord {
    std::size_t index = 0;
    int nodes = 0;
    bool converged = false;
    int iterations = 0;
    int clamp_count = 0;
    double phi = 0.0;
    double reference_phi = 0.0;
    std::string reference;  // "reduced" or "brute-force"
    double relative_error = 0.0;
    DeviationReport nash;
    bool pass = false;
};

inline VerifyRecord verify_round(std::size_t index, const RoundContext& ctx,
                                 const EquilibriumSettings& settings) {
    VerifyRecord v;
    v.index = index;
    v.nodes = static_cast<int>(ctx.size());
    const auto eq = fixed_point_iterate(ctx, settings);
    v.converged = eq.converged;
    v.iterations = eq.iterations;
    v.clamp_count = eq.clamp_count;
    v.phi = eq.phi_star;
    if (!eq.converged) return v;
    double tol;
    if (eq.clamp_count == 0) {
        v.reference = "reduced";
        v.reference_phi = solve_reduced_fixed_point(ReducedMapConstants::from_context(ctx));
        tol = 1e-6;
    } else {
        v.reference = "brute-force";
        v.reference_phi = brute_force_equilibrium(ctx).phi;
        tol = 1e-5;
    }
    v.relative_error = std::abs(v.phi - v.reference_phi) / std::abs(v.reference_phi);
    v.nash = verify_nash(eq, ctx);
    v.pass = v.relative_error <= tol && v.nash.verdict;
    return v;
}

inline json verify_json(const VerifyRecord& v) {
    return {{"index", v.index},
            {"nodes", v.nodes},
            {"converged", v.converged},
            {"iterations", v.iterations},
            {"clamp_count", v.clamp_count},
            {"phi", v.phi},
            {"reference", v.reference},
            {"reference_phi", v.reference_phi},
            {"relative_error", v.relative_error},
            {"max_follower_improvement", v.nash.max_follower_improvement},
            {"leader_relative_improvement", v.nash.leader_improvement},
            {"nash_verdict", v.nash.verdict},
            {"pass", v.pass}};
}

}  // namespace fedbud
