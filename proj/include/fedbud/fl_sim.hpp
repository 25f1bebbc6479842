#pragma once

// Round loop: strategy decision (equilibrium), DP-noised local training on
// the synthetic task, weighted aggregation, queue updates, and the
// per-round ledger.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "fedbud/common.hpp"
#include "fedbud/config.hpp"
#include "fedbud/convergence_bound.hpp"
#include "fedbud/economics.hpp"
#include "fedbud/equilibrium.hpp"
#include "fedbud/queues.hpp"
#include "fedbud/rng.hpp"
#include "fedbud/task.hpp"

namespace fedbud {

inline double noise_sigma(const LearningConstants& lc, const NodeStrategy& s) {
    require_domain(s.b > 0.0 && s.eps > 0.0, "strategy coordinates must be positive");
    return lc.eta * lc.big_c / (s.b * s.eps);
}

struct LocalUpdateSpec {
    std::size_t b_int = 1;
    double sigma = 0.0;
    int steps = 1;
};

/// max(1, nearest integer of b), capped at the pool size.
inline std::size_t round_data_count(double b, std::size_t pool_size) {
    require_domain(b > 0.0, "data volume must be positive");
    const double r = std::max(1.0, std::nearbyint(b));
    return static_cast<std::size_t>(std::min(r, static_cast<double>(pool_size)));
}

/// `steps` gradient steps on the sampled rows, then one isotropic Gaussian
/// perturbation with per-coordinate std spec.sigma.
inline Vec local_update(const Vec& w, const LocalUpdateSpec& spec, const DataPool& pool,
                        std::span<const std::size_t> rows, double eta, double mu,
                        PhiloxStream& rng) {
    if (rows.empty()) throw std::invalid_argument("local update needs a non-empty sample");
    require_domain(spec.steps >= 1, "local steps must be at least 1");
    require_domain(spec.sigma >= 0.0, "noise std must be non-negative");
    Vec local = w;
    for (int s = 0; s < spec.steps; ++s) local -= eta * sample_gradient(pool, rows, local, mu);
    if (spec.sigma > 0.0)
        for (Eigen::Index j = 0; j < local.size(); ++j) local(j) += spec.sigma * rng.normal();
    return local;
}

inline Vec aggregate(std::span<const Vec> locals, std::span<const double> weights) {
    if (locals.empty() || locals.size() != weights.size())
        throw std::invalid_argument("aggregation needs one weight per local model");
    double total = 0.0;
    for (double v : weights) {
        require_domain(v >= 0.0, "aggregation weights must be non-negative");
        total += v;
    }
    if (!(total > 0.0)) throw std::invalid_argument("aggregation weights are all zero");
    Vec out = Vec::Zero(locals.front().size());
    for (std::size_t k = 0; k < locals.size(); ++k) out.noalias() += (weights[k] / total) * locals[k];
    return out;
}

namespace detail {

/// Static partition of [0, n) over worker threads; fn(i) must only touch slot i.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w * n / workers; i < (w + 1) * n / workers; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

struct NodeRecord {
    double b = 0.0;
    double eps = 0.0;
    double q = 0.0;  // queues used for this round's decision
    double z = 0.0;
    double payment = 0.0;
    double cost = 0.0;
    double utility_inc = 0.0;
    double sigma = std::numeric_limits<double>::quiet_NaN();
    double lambda = std::numeric_limits<double>::quiet_NaN();
    std::size_t b_int = 0;
    bool clamped = false;
};

struct RoundRecord {
    int t = 0;
    double phi = 0.0;
    double r = 0.0;
    int iterations = 0;
    bool converged = false;
    bool carried_forward = false;
    int clamp_count = 0;
    double residual = 0.0;
    double bound = std::numeric_limits<double>::quiet_NaN();  // after this round
    double gap = std::numeric_limits<double>::quiet_NaN();    // after this round
    double weight_sum = std::numeric_limits<double>::quiet_NaN();
    std::vector<NodeRecord> nodes;
};

struct TrajectoryLog {
    int horizon = 0;
    std::uint64_t seed = 0;
    bool trained = false;
    GameWeights weights;
    bool gamma1_auto = false;
    KappaSet kappas;
    std::vector<NodeProfile> profiles;
    double e0 = std::numeric_limits<double>::quiet_NaN();
    std::vector<RoundRecord> rounds;
    std::vector<VirtualQueuePair> final_queues;
    std::optional<int> aborted_round;

    bool all_converged() const {
        if (aborted_round || static_cast<int>(rounds.size()) != horizon) return false;
        return std::all_of(rounds.begin(), rounds.end(), [](const RoundRecord& r) { return r.converged; });
    }
};

struct RunOptions {
    bool train = true;
    std::function<void(int, const RoundContext&, const EquilibriumResult&)> on_equilibrium;
    std::vector<std::vector<FixedPointTracePoint>>* fixed_point_traces = nullptr;
    std::optional<std::uint64_t> task_seed;  // empty: the run seed also generates the task
};

inline TrajectoryLog run_experiment(const SystemConfig& cfg, const ResolvedGame& game,
                                    std::uint64_t seed, const RunOptions& opts = {}) {
    cfg.validate();
    const std::size_t n = game.profiles.size();
    if (n == 0) throw std::invalid_argument("experiment needs at least one node");

    TrajectoryLog log;
    log.horizon = cfg.horizon;
    log.seed = seed;
    log.trained = opts.train;
    log.weights = game.weights;
    log.gamma1_auto = game.gamma1_auto;
    log.kappas = game.kappas;
    log.profiles = game.profiles;

    std::vector<PerRoundBudget> budgets(n);
    for (std::size_t k = 0; k < n; ++k)
        budgets[k] = PerRoundBudget::from_profile(game.profiles[k], cfg.horizon);
    std::vector<VirtualQueuePair> queues(n);

    std::optional<SyntheticTask> task;
    Vec w;
    double bound = 0.0;
    if (opts.train) {
        TaskSpec ts{cfg.lc.dim, static_cast<int>(n), cfg.pool_size, cfg.shift, cfg.label_noise,
                    cfg.lc.rho, cfg.lc.mu};
        task = generate_task(ts, opts.task_seed.value_or(seed));
        w = Vec::Zero(cfg.lc.dim);
        log.e0 = global_gap(w, *task);
        bound = log.e0;
    }

    std::optional<EquilibriumResult> previous;
    for (int t = 0; t < cfg.horizon; ++t) {
        RoundContext ctx{game.profiles, queues, game.kappas, cfg.lc, game.weights, t, cfg.horizon};
        EquilibriumSettings settings = cfg.eq;
        if (cfg.warm_start && previous) settings.phi0 = previous->phi_star;

        std::vector<FixedPointTracePoint> trace;
        EquilibriumResult eq =
            fixed_point_iterate(ctx, settings, opts.fixed_point_traces ? &trace : nullptr);
        if (opts.fixed_point_traces) opts.fixed_point_traces->push_back(std::move(trace));
        if (opts.on_equilibrium) opts.on_equilibrium(t, ctx, eq);

        RoundRecord rec;
        rec.t = t;
        rec.iterations = eq.iterations;
        rec.converged = eq.converged;
        rec.residual = eq.residual;
        if (!eq.converged) {
            if (cfg.policy == FailurePolicy::abort || !previous) {
                log.aborted_round = t;
                break;
            }
            const int iterations = eq.iterations;
            const double residual = eq.residual;
            eq = *previous;
            eq.iterations = iterations;
            eq.residual = residual;
            rec.carried_forward = true;
        }
        rec.phi = eq.phi_star;
        rec.r = eq.r_star;
        rec.clamp_count = eq.clamp_count;

        const auto shares = allocate_payment(eq.strategies, eq.r_star);
        rec.nodes.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            auto& nr = rec.nodes[k];
            const auto& s = eq.strategies[k];
            nr.b = s.b;
            nr.eps = s.eps;
            nr.q = queues[k].q;
            nr.z = queues[k].z;
            nr.payment = shares[k].amount;
            nr.cost = node_round_cost(s, game.profiles[k]);
            nr.utility_inc = nr.payment - nr.cost;
            nr.clamped = std::abs(s.product() - 1.0) <= kProductSlack;
        }

        if (opts.train) {
            std::vector<Vec> locals(n);
            detail::parallel_for(n, cfg.threads, [&](std::size_t k) {
                auto& nr = rec.nodes[k];
                const auto& pool = task->pools[k];
                nr.lambda = estimate_lambda(w, pool, *task);
                LocalUpdateSpec spec;
                spec.b_int = round_data_count(nr.b, pool.size());
                spec.sigma = cfg.dp_noise ? noise_sigma(cfg.lc, eq.strategies[k]) : 0.0;
                spec.steps = cfg.steps;
                nr.b_int = spec.b_int;
                nr.sigma = spec.sigma;
                const auto node = static_cast<std::uint32_t>(k);
                const auto round = static_cast<std::uint32_t>(t);
                PhiloxStream sampler(seed, node, round, StreamPurpose::sampling);
                const auto rows = sample_without_replacement(pool.size(), spec.b_int, sampler);
                PhiloxStream noise(seed, node, round, StreamPurpose::dp_noise);
                locals[k] = local_update(w, spec, pool, rows, cfg.lc.eta, cfg.lc.mu, noise);
            });

            std::vector<double> weights(n);
            RoundBoundInputs in;
            in.b.resize(n);
            in.eps.resize(n);
            in.lambdas.resize(n);
            double total_b = 0.0;
            for (std::size_t k = 0; k < n; ++k) total_b += rec.nodes[k].b;
            double weight_sum = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                weights[k] = rec.nodes[k].b;
                weight_sum += rec.nodes[k].b / total_b;
                in.b[k] = rec.nodes[k].b;
                in.eps[k] = rec.nodes[k].eps;
                in.lambdas[k] = rec.nodes[k].lambda;
            }
            w = aggregate(locals, weights);
            bound = one_round_recursion(bound, in, game.kappas, cfg.lc);
            rec.bound = bound;
            rec.gap = global_gap(w, *task);
            rec.weight_sum = weight_sum;
        }

        for (std::size_t k = 0; k < n; ++k) queues[k] = update_queues(queues[k], eq.strategies[k], budgets[k]);
        previous = eq;
        log.rounds.push_back(std::move(rec));
    }
    log.final_queues = queues;
    return log;
}

inline TrajectoryLog run_experiment(const SystemConfig& cfg, std::uint64_t seed,
                                    const RunOptions& opts = {}) {
    return run_experiment(cfg, resolve_game(cfg, seed), seed, opts);
}

}  // namespace fedbud
