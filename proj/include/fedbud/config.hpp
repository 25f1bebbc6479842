#pragma once

// Run configuration and its resolution into a concrete game instance
// (node profiles, budgets, weights) for one seed.

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedbud/common.hpp"
#include "fedbud/equilibrium.hpp"
#include "fedbud/rng.hpp"
#include "fedbud/strategy_core.hpp"

namespace fedbud {

enum class FailurePolicy { abort, carry_forward };

struct SystemConfig {
    int horizon = 100;
    int nodes = 100;
    LearningConstants lc{1e-3, 10000.0, 500.0, 2.0, 10};

    std::optional<double> gamma1;  // empty: auto-scaled from gamma1_target_volume
    double gamma1_target_volume = 12.0;
    double gamma2 = 1.0;

    double alpha_min = 0.01;
    double alpha_max = 0.05;
    double beta_min = 0.01;
    double beta_max = 0.05;
    std::optional<double> n_cap;  // empty: derived per node
    std::optional<double> m_cap;
    double budget_stiffness = 0.3;

    EquilibriumSettings eq;
    bool warm_start = true;

    int pool_size = 400;
    double shift = 0.01;
    double label_noise = 0.01;
    int steps = 1;
    bool dp_noise = true;

    FailurePolicy policy = FailurePolicy::abort;
    std::uint64_t seed = 1;
    int threads = 0;  // 0: hardware concurrency

    std::vector<double> sweep_gamma1_factors{1.0, 5.0, 10.0};
    std::vector<int> sweep_nodes{10, 50, 100};
    int sweep_seeds = 10;
    std::vector<double> baseline_constant_factors{0.5, 2.0};
    int verify_instances = 20;
    bool write_task_snapshot = false;

    void validate() const;
};

namespace detail {

inline void check(bool ok, const char* key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
}

}  // namespace detail

inline void SystemConfig::validate() const {
    using detail::check;
    check(horizon >= 1, "horizon", "must be at least 1");
    check(horizon < (1 << 24), "horizon", "exceeds the rng round address space");
    check(nodes >= 1, "nodes", "must be at least 1");
    check(lc.eta > 0.0, "eta", "must be positive");
    check(lc.big_c > 0.0, "big_c", "must be positive");
    check(lc.rho > 0.0, "rho", "must be positive");
    check(lc.mu > 0.0, "mu", "must be positive");
    check(lc.mu < lc.rho, "mu", "must be below rho for the synthetic task");
    check(lc.dim >= 1, "dim", "must be at least 1");
    if (lc.eta > 1.0 / lc.rho) {
        std::ostringstream os;
        os << "eta=" << lc.eta << " exceeds 1/rho=" << 1.0 / lc.rho;
        throw ConfigError("eta", os.str());
    }
    if (gamma1) check(*gamma1 > 0.0, "gamma1", "must be positive");
    check(gamma1_target_volume > 0.0, "gamma1_target_volume", "must be positive");
    check(gamma2 > 0.0, "gamma2", "must be positive");
    check(alpha_min > 0.0 && alpha_max >= alpha_min, "alpha_min", "need 0 < alpha_min <= alpha_max");
    check(beta_min > 0.0 && beta_max >= beta_min, "beta_min", "need 0 < beta_min <= beta_max");
    if (n_cap) check(*n_cap > 0.0, "n_cap", "must be positive");
    if (m_cap) check(*m_cap > 0.0, "m_cap", "must be positive");
    check(budget_stiffness > 0.0, "budget_stiffness", "must be positive");
    check(eq.tol > 0.0, "tol", "must be positive");
    check(eq.max_iters >= 1, "max_iters", "must be at least 1");
    check(eq.damping > 0.0 && eq.damping <= 1.0, "damping", "must lie in (0, 1]");
    check(eq.phi_min > 0.0, "phi_min", "must be positive");
    if (eq.phi0) check(*eq.phi0 > 0.0, "phi0", "must be positive");
    check(pool_size >= 1, "pool_size", "must be at least 1");
    check(shift >= 0.0, "shift", "must be non-negative");
    check(label_noise >= 0.0, "label_noise", "must be non-negative");
    check(steps >= 1, "steps", "must be at least 1");
    check(threads >= 0, "threads", "must be non-negative");
    check(!sweep_gamma1_factors.empty(), "sweep_gamma1_factors", "must not be empty");
    for (double f : sweep_gamma1_factors) check(f > 0.0, "sweep_gamma1_factors", "must be positive");
    check(!sweep_nodes.empty(), "sweep_nodes", "must not be empty");
    for (int n : sweep_nodes) check(n >= 1, "sweep_nodes", "must be at least 1");
    check(sweep_seeds >= 1, "sweep_seeds", "must be at least 1");
    for (double f : baseline_constant_factors)
        check(f > 0.0 && f != 1.0, "baseline_constant_factors", "must be positive and differ from 1");
    check(verify_instances >= 1, "verify_instances", "must be at least 1");
}

/// Concrete game instance for one seed.
struct ResolvedGame {
    std::vector<NodeProfile> profiles;
    GameWeights weights;
    KappaSet kappas;
    bool gamma1_auto = false;
};

inline std::vector<NodeProfile> draw_profiles(const SystemConfig& cfg, std::uint64_t seed) {
    std::vector<NodeProfile> out(static_cast<std::size_t>(cfg.nodes));
    for (int k = 0; k < cfg.nodes; ++k) {
        PhiloxStream rng(seed, static_cast<std::uint32_t>(k), 0, StreamPurpose::profiles);
        auto& p = out[static_cast<std::size_t>(k)];
        p.alpha = rng.uniform(cfg.alpha_min, cfg.alpha_max);
        p.beta = rng.uniform(cfg.beta_min, cfg.beta_max);
        p.n_cap = 1.0;
        p.m_cap = 1.0;
    }
    return out;
}

/// Round-0 equilibrium with empty queues.
inline EquilibriumResult opening_equilibrium(const SystemConfig& cfg,
                                             const std::vector<NodeProfile>& profiles,
                                             const KappaSet& kappas, const GameWeights& w) {
    std::vector<VirtualQueuePair> queues(profiles.size());
    RoundContext ctx{profiles, queues, kappas, cfg.lc, w, 0, cfg.horizon};
    return fixed_point_iterate(ctx, cfg.eq);
}

inline double mean_volume(const EquilibriumResult& eq) {
    double s = 0.0;
    for (const auto& st : eq.strategies) s += st.b;
    return s / static_cast<double>(eq.strategies.size());
}

/// gamma1 for which the opening equilibrium has the target mean data volume.
/// The mean volume falls monotonically as gamma1 grows.
inline double solve_gamma1(const SystemConfig& cfg, const std::vector<NodeProfile>& profiles,
                           const KappaSet& kappas) {
    const double target = cfg.gamma1_target_volume;
    auto volume_at = [&](double log_g) {
        const GameWeights w{std::exp(log_g), cfg.gamma2};
        const auto eq = opening_equilibrium(cfg, profiles, kappas, w);
        if (!eq.converged)
            throw ConfigError("gamma1_target_volume",
                              "opening equilibrium did not converge while scaling gamma1");
        return mean_volume(eq);
    };
    double lo = 0.0, hi = 0.0;
    double v = volume_at(0.0);
    int expand = 0;
    if (v > target) {
        for (hi = 0.0; volume_at(hi) > target; hi += 2.0)
            if (++expand > 400) throw ConfigError("gamma1_target_volume", "target volume unreachable");
        lo = hi - 2.0;
    } else {
        for (lo = 0.0; volume_at(lo) <= target; lo -= 2.0)
            if (++expand > 400)
                throw ConfigError("gamma1_target_volume",
                                  "target volume is below the b*eps >= 1 floor");
        hi = lo + 2.0;
    }
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        (volume_at(mid) > target ? lo : hi) = mid;
    }
    return std::exp(0.5 * (lo + hi));
}

inline ResolvedGame resolve_game(const SystemConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ResolvedGame game;
    game.kappas = compute_kappas(cfg.lc);
    game.profiles = draw_profiles(cfg, seed);
    game.gamma1_auto = !cfg.gamma1.has_value();
    game.weights = {cfg.gamma1 ? *cfg.gamma1 : solve_gamma1(cfg, game.profiles, game.kappas),
                    cfg.gamma2};

    if (!cfg.n_cap || !cfg.m_cap) {
        const auto eq = opening_equilibrium(cfg, game.profiles, game.kappas, game.weights);
        if (!eq.converged)
            throw ConfigError("n_cap", "opening equilibrium did not converge while deriving budgets");
        const double t = static_cast<double>(cfg.horizon);
        const double s = cfg.budget_stiffness * cfg.gamma2;
        for (std::size_t k = 0; k < game.profiles.size(); ++k) {
            auto& p = game.profiles[k];
            const double b0 = eq.strategies[k].b;
            const double e0 = eq.strategies[k].eps;
            p.n_cap = t * std::pow(s * p.alpha * std::pow(b0, 6.0), 0.25);
            p.m_cap = t * std::pow(s * p.beta * std::pow(e0, 6.0), 0.25);
        }
    }
    for (auto& p : game.profiles) {
        if (cfg.n_cap) p.n_cap = *cfg.n_cap;
        if (cfg.m_cap) p.m_cap = *cfg.m_cap;
        p.validate();
    }
    return game;
}

}  // namespace fedbud
