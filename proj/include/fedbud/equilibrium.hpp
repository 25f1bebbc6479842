#pragma once

// Per-round strategy decision: mean-field fixed-point iteration between the
// server's payment and the nodes' best responses, plus an independent
// scalar solver for the same fixed point.
//
// Composing both closed forms, every unclamped node satisfies
//   log(b_k eps_k) = log R(phi) + 0.5 log(a_k b_k) - log(phi),
//   R(phi)^3      = c_t phi^2 sum(1/b_k) / (sum sqrt(a_k))^2,
// so the update g(phi) = sum_k log(b_k eps_k) collapses to
//   g(phi) = K_t - (N/3) log(phi).
// |g'(phi)| = N/(3 phi) exceeds 1 below phi = N/3, which is why the plain
// update oscillates and the iteration is damped.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "fedbud/common.hpp"
#include "fedbud/queues.hpp"
#include "fedbud/strategy_core.hpp"

namespace fedbud {

struct RoundContext {
    std::span<const NodeProfile> profiles;
    std::span<const VirtualQueuePair> queues;
    KappaSet kappas;
    LearningConstants lc;
    GameWeights weights;
    int t = 0;
    int horizon = 1;

    std::size_t size() const noexcept { return profiles.size(); }

    double leader_coeff() const { return leader_coefficient(t, horizon, kappas, lc, weights); }
};

struct EquilibriumSettings {
    double tol = 1e-8;
    int max_iters = 200;
    double damping = 0.5;
    bool adaptive_damping = true;
    double phi_min = 1e-6;
    std::optional<double> phi0;

    void validate() const {
        require_domain(tol > 0.0, "tolerance must be positive");
        require_domain(max_iters >= 1, "max_iters must be at least 1");
        require_domain(damping > 0.0 && damping <= 1.0, "damping must lie in (0, 1]");
        require_domain(phi_min > 0.0, "phi_min must be positive");
    }
};

struct FixedPointTracePoint {
    int iteration = 0;
    double phi = 0.0;
    double r = 0.0;
};

struct EquilibriumResult {
    double phi_star = 0.0;
    double r_star = 0.0;
    std::vector<NodeStrategy> strategies;
    int iterations = 0;
    bool converged = false;
    int clamp_count = 0;  // nodes sitting on the b*eps = 1 boundary at phi_star
    double residual = std::numeric_limits<double>::infinity();  // |sum log(b eps) - phi_star|
};

/// Everything Stage I/II produce for a fixed estimate phi.
struct StageEvaluation {
    double r = 0.0;
    std::vector<NodeStrategy> strategies;
    int clamp_count = 0;
    double log_sum = 0.0;  // g(phi) = sum log(b_k eps_k), left-to-right
};

inline StageEvaluation evaluate_stages(double phi, const RoundContext& ctx) {
    require_domain(phi > 0.0, "mean-field estimate phi must be positive");
    if (ctx.profiles.size() != ctx.queues.size() || ctx.profiles.empty())
        throw std::invalid_argument("round context needs one queue pair per node and >= 1 node");

    std::vector<QualityFactors> factors(ctx.size());
    for (std::size_t k = 0; k < ctx.size(); ++k)
        factors[k] = quality_factors(ctx.profiles[k], ctx.queues[k].q, ctx.queues[k].z, phi,
                                     ctx.weights);

    StageEvaluation ev;
    ev.r = server_optimal_payment(ctx.t, ctx.horizon, ctx.kappas, ctx.lc, ctx.weights, factors);
    ev.strategies.resize(ctx.size());
    for (std::size_t k = 0; k < ctx.size(); ++k) {
        NodeStrategy s = unclamped_best_response(ev.r, factors[k]);
        if (apply_domain_clamp(s)) ++ev.clamp_count;
        ev.strategies[k] = s;
        ev.log_sum += std::max(std::log(s.product()), 0.0);
    }
    return ev;
}

inline double default_phi0(std::size_t n) {
    const double nn = static_cast<double>(n);
    return std::max(nn / 3.0 + 1.0, nn * std::log(2.0));
}

inline EquilibriumResult fixed_point_iterate(const RoundContext& ctx,
                                             const EquilibriumSettings& settings,
                                             std::vector<FixedPointTracePoint>* trace = nullptr) {
    settings.validate();
    if (ctx.profiles.empty()) throw std::invalid_argument("equilibrium needs at least one node");

    double phi = std::max(settings.phi0.value_or(default_phi0(ctx.size())), settings.phi_min);
    double prev_phi = 0.0;
    double prev_g = 0.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    int shrink_mark = 0;
    double shrink_width = std::numeric_limits<double>::infinity();

    EquilibriumResult result;
    for (int i = 0; i < settings.max_iters; ++i) {
        StageEvaluation ev = evaluate_stages(phi, ctx);
        if (trace) trace->push_back({i, phi, ev.r});
        const double g = ev.log_sum;
        const double residual = std::abs(g - phi);
        result.iterations = i + 1;
        if (!std::isfinite(g)) break;
        if (residual <= settings.tol) {
            result.phi_star = phi;
            result.r_star = ev.r;
            result.strategies = std::move(ev.strategies);
            result.clamp_count = ev.clamp_count;
            result.residual = residual;
            result.converged = true;
            return result;
        }

        double theta = settings.damping;
        if (settings.adaptive_damping && i > 0 && phi != prev_phi) {
            // g is non-increasing, so the secant slope is <= 0 and the
            // Wegstein step 1/(1 - slope) lies in (0, 1].
            const double slope = (g - prev_g) / (phi - prev_phi);
            if (slope < 0.0) theta = std::min(theta, 1.0 / (1.0 - slope));
        }
        prev_phi = phi;
        prev_g = g;
        // phi - g(phi) is increasing, so each evaluation tightens a bracket
        // around the fixed point. Steps that leave it, or stall inside it,
        // fall back to bisection.
        (g > phi ? lo : hi) = phi;
        double next = std::max(settings.phi_min, (1.0 - theta) * phi + theta * g);
        if (settings.adaptive_damping && std::isfinite(hi)) {
            const double width = hi - lo;
            if (!(next > lo && next < hi) || (i - shrink_mark >= 3 && width > 0.5 * shrink_width)) {
                next = 0.5 * (lo + hi);
                shrink_mark = i;
                shrink_width = width;
            } else if (width <= 0.5 * shrink_width) {
                shrink_mark = i;
                shrink_width = width;
            }
        }
        phi = next;

        result.phi_star = prev_phi;
        result.r_star = ev.r;
        result.strategies = std::move(ev.strategies);
        result.clamp_count = ev.clamp_count;
        result.residual = residual;
    }
    result.converged = false;
    return result;
}

struct ReducedMapConstants {
    std::vector<double> a;  // gamma2 / (2 (gamma2 alpha_k + Q_k))
    std::vector<double> b;  // gamma2 / (2 (gamma2 beta_k + Z_k))
    double c_t = 0.0;
    double k_t = 0.0;

    static ReducedMapConstants from_parts(std::vector<double> a, std::vector<double> b,
                                          double c_t) {
        if (a.empty() || a.size() != b.size())
            throw std::invalid_argument("reduced map needs matching, non-empty a and b");
        require_domain(c_t > 0.0, "leader coefficient must be positive");
        double inv_b = 0.0, sqrt_a = 0.0, log_ab = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            require_domain(a[k] > 0.0 && b[k] > 0.0, "reduced map constants must be positive");
            inv_b += 1.0 / b[k];
            sqrt_a += std::sqrt(a[k]);
            log_ab += std::log(a[k] * b[k]);
        }
        const double n = static_cast<double>(a.size());
        ReducedMapConstants rc;
        rc.k_t = n / 3.0 * (std::log(c_t) + std::log(inv_b) - 2.0 * std::log(sqrt_a)) +
                 0.5 * log_ab;
        rc.a = std::move(a);
        rc.b = std::move(b);
        rc.c_t = c_t;
        return rc;
    }

    static ReducedMapConstants from_context(const RoundContext& ctx) {
        std::vector<double> a(ctx.size()), b(ctx.size());
        const double g2 = ctx.weights.gamma2;
        for (std::size_t k = 0; k < ctx.size(); ++k) {
            a[k] = g2 / (2.0 * (g2 * ctx.profiles[k].alpha + ctx.queues[k].q));
            b[k] = g2 / (2.0 * (g2 * ctx.profiles[k].beta + ctx.queues[k].z));
        }
        return from_parts(std::move(a), std::move(b), ctx.leader_coeff());
    }
};

inline double reduced_map(double phi, double k_t, std::size_t n) {
    require_domain(phi > 0.0, "reduced map needs phi > 0");
    return k_t - static_cast<double>(n) / 3.0 * std::log(phi);
}

inline double reduced_map(double phi, const ReducedMapConstants& rc) {
    return reduced_map(phi, rc.k_t, rc.a.size());
}

/// Root of h(phi) = phi + (N/3) log(phi) - K on (0, inf). h is strictly
/// increasing with h' >= 1, so |h| <= tol also bounds the error in phi.
inline double solve_reduced_fixed_point(double k_t, std::size_t n, double tol = 1e-12) {
    if (!std::isfinite(k_t)) throw std::runtime_error("reduced map constant K_t is not finite");
    require_domain(n >= 1, "node count must be positive");
    const double third = static_cast<double>(n) / 3.0;
    auto h = [&](double phi) { return phi + third * std::log(phi) - k_t; };

    double lo = 1.0, hi = 1.0;
    while (h(lo) > 0.0) {
        lo *= 0.5;
        if (lo < std::numeric_limits<double>::min())
            throw std::runtime_error("cannot bracket the reduced fixed point from below");
    }
    while (h(hi) < 0.0) {
        hi *= 2.0;
        if (!std::isfinite(hi))
            throw std::runtime_error("cannot bracket the reduced fixed point from above");
    }
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 4000; ++it) {
        mid = 0.5 * (lo + hi);
        const double hm = h(mid);
        if (std::abs(hm) <= tol || mid == lo || mid == hi) break;
        (hm < 0.0 ? lo : hi) = mid;
    }
    return mid;
}

inline double solve_reduced_fixed_point(const ReducedMapConstants& rc, double tol = 1e-12) {
    return solve_reduced_fixed_point(rc.k_t, rc.a.size(), tol);
}

}  // namespace fedbud
