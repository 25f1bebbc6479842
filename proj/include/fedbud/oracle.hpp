#pragma once

// Brute-force counterparts of the closed forms: log-grid scans with
// golden-section refinement, a clamp-aware equilibrium search built only
// from those scans, and unilateral-deviation checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedbud/common.hpp"
#include "fedbud/equilibrium.hpp"
#include "fedbud/queues.hpp"
#include "fedbud/strategy_core.hpp"

namespace fedbud {

struct GridSpec {
    double lo = 1e-3;
    double hi = 1e3;
    int points = 256;
    int refinement = 200;  // golden-section iterations after the scan

    void validate() const {
        require_domain(lo > 0.0 && hi > lo, "grid needs 0 < lo < hi");
        require_domain(points >= 64, "grid needs at least 64 points");
        require_domain(refinement >= 0, "refinement count must be non-negative");
    }
};

class GridBoundaryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Golden-section minimisation of a unimodal f on [a, b].
inline double golden_section_minimize(const std::function<double(double)>& f, double a, double b,
                                      int iterations) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < iterations && c < d; ++i) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

/// Minimiser of f over [grid.lo, grid.hi], scanned in log space and refined
/// between the neighbours of the best grid point.
inline double log_grid_minimize(const std::function<double(double)>& f, const GridSpec& grid) {
    grid.validate();
    const double a = std::log(grid.lo);
    const double step = (std::log(grid.hi) - a) / (grid.points - 1);
    int best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid.points; ++i) {
        const double v = f(std::exp(a + step * i));
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    if (best == 0 || best == grid.points - 1)
        throw GridBoundaryError("minimum sits on the grid boundary; widen the bounds");
    auto g = [&](double u) { return f(std::exp(u)); };
    return std::exp(golden_section_minimize(g, a + step * (best - 1), a + step * (best + 1),
                                            grid.refinement));
}

/// Same as log_grid_minimize, widening the bounds by 10^3 on each side
/// (up to `widenings` times) while the minimum sits on the boundary.
inline double widening_minimize(const std::function<double(double)>& f, GridSpec grid,
                                int widenings = 6) {
    for (int i = 0;; ++i) {
        try {
            return log_grid_minimize(f, grid);
        } catch (const GridBoundaryError&) {
            if (i >= widenings) throw;
            grid.lo *= 1e-3;
            grid.hi *= 1e3;
        }
    }
}

/// Minimiser of the single-slot objective over b*eps >= 1, using only
/// evaluations of drift_plus_penalty_value. The objective separates in b and
/// eps, so the free optimum is found per coordinate; if it is infeasible the
/// search moves to the boundary b = e^u, eps = e^-u.
inline NodeStrategy brute_force_node_response(double r, double phi, const NodeProfile& profile,
                                              double q, double z, const GameWeights& w,
                                              const GridSpec& grid = {}) {
    require_domain(r > 0.0 && phi > 0.0, "payment and phi must be positive");
    const PerRoundBudget budget{1.0, 1.0};
    const VirtualQueuePair pair{q, z};
    auto obj = [&](double b, double e) {
        return drift_plus_penalty_value({b, e}, r, phi, profile, pair, budget, w);
    };
    const double b = widening_minimize([&](double x) { return obj(x, 1.0); }, grid);
    const double e = widening_minimize([&](double x) { return obj(1.0, x); }, grid);
    if (b * e >= 1.0) return {b, e};
    const double x = widening_minimize([&](double v) { return obj(v, 1.0 / v); }, grid);
    return {x, 1.0 / x};
}

/// f(R) = gamma1 R + kappa1^(T-1-t) kappa3 eta^2 C^2 sum(1/Y) / (R^2 (sum sqrt X)^2)
inline double server_objective(double r, int t, int horizon, const KappaSet& k,
                               const LearningConstants& lc, const GameWeights& w,
                               std::span<const QualityFactors> factors) {
    double inv_y = 0.0, sqrt_x = 0.0;
    for (const auto& f : factors) {
        inv_y += 1.0 / f.y;
        sqrt_x += std::sqrt(f.x);
    }
    return w.gamma1 * r + accuracy_weight(t, horizon, k, lc) * inv_y / (r * r * sqrt_x * sqrt_x);
}

inline double brute_force_server_payment(int t, int horizon, const KappaSet& k,
                                         const LearningConstants& lc, const GameWeights& w,
                                         std::span<const QualityFactors> factors,
                                         const GridSpec& grid = {}) {
    if (factors.empty()) throw std::invalid_argument("server payment needs at least one node");
    for (const auto& f : factors)
        require_domain(f.x > 0.0 && f.y > 0.0, "quality factors must be positive");
    return widening_minimize(
        [&](double r) { return server_objective(r, t, horizon, k, lc, w, factors); }, grid);
}

struct BruteForceEquilibrium {
    double phi = 0.0;
    double r = 0.0;
    std::vector<NodeStrategy> strategies;
};

/// Fixed point phi = G(phi) with G built from the brute-force payment and
/// responses. G is non-increasing in phi, so phi - G(phi) is bisected.
inline BruteForceEquilibrium brute_force_equilibrium(const RoundContext& ctx,
                                                     const GridSpec& grid = {}, int bisections = 70) {
    auto evaluate = [&](double phi, BruteForceEquilibrium* out) {
        std::vector<QualityFactors> f(ctx.size());
        for (std::size_t k = 0; k < ctx.size(); ++k)
            f[k] = quality_factors(ctx.profiles[k], ctx.queues[k].q, ctx.queues[k].z, phi, ctx.weights);
        const double r = brute_force_server_payment(ctx.t, ctx.horizon, ctx.kappas, ctx.lc, ctx.weights, f, grid);
        double g = 0.0;
        std::vector<NodeStrategy> s(ctx.size());
        for (std::size_t k = 0; k < ctx.size(); ++k) {
            s[k] = brute_force_node_response(r, phi, ctx.profiles[k], ctx.queues[k].q,
                                             ctx.queues[k].z, ctx.weights, grid);
            g += std::max(std::log(s[k].product()), 0.0);
        }
        if (out) *out = {phi, r, std::move(s)};
        return phi - g;
    };
    double lo = 1e-6, hi = 1.0;
    while (evaluate(hi, nullptr) < 0.0) {
        hi *= 4.0;
        if (hi > 1e12) throw std::runtime_error("cannot bracket the brute-force fixed point");
    }
    if (evaluate(lo, nullptr) > 0.0) lo = 0.0;
    for (int i = 0; i < bisections; ++i) {
        const double mid = 0.5 * (lo + hi);
        (evaluate(mid, nullptr) < 0.0 ? lo : hi) = mid;
    }
    BruteForceEquilibrium out;
    evaluate(0.5 * (lo + hi) > 0.0 ? 0.5 * (lo + hi) : hi, &out);
    return out;
}

struct NodeDeviation {
    NodeStrategy best;
    double improvement = 0.0;  // objective(equilibrium) - objective(best deviation)
};

struct DeviationReport {
    std::vector<NodeDeviation> followers;
    double leader_best_r = 0.0;
    double leader_improvement = 0.0;  // relative
    double max_follower_improvement = 0.0;
    double tolerance = 1e-6;
    bool verdict = false;
};

namespace detail {

/// Minimum of the single-slot objective over the feasible set b*eps >= 1:
/// a coarse 2-D log grid followed by shrinking local grids.
inline NodeStrategy feasible_grid_search(const std::function<double(double, double)>& obj,
                                         const GridSpec& grid) {
    const int m = 64;
    double lu = std::log(grid.lo), hu = std::log(grid.hi);
    double lv = lu, hv = hu;
    NodeStrategy best{1.0, 1.0};
    double best_val = obj(1.0, 1.0);
    for (int round = 0; round < 16; ++round) {
        const double su = (hu - lu) / (m - 1), sv = (hv - lv) / (m - 1);
        double bu = std::log(best.b), bv = std::log(best.eps);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) {
                double u = lu + su * i, v = lv + sv * j;
                if (u + v < 0.0) continue;
                const double val = obj(std::exp(u), std::exp(v));
                if (val < best_val) {
                    best_val = val;
                    bu = u;
                    bv = v;
                }
            }
        }
        // include the boundary point closest to the current best
        const double u_edge = 0.5 * (bu - bv);
        const double edge_val = obj(std::exp(u_edge), std::exp(-u_edge));
        if (edge_val < best_val) {
            best_val = edge_val;
            bu = u_edge;
            bv = -u_edge;
        }
        best = {std::exp(bu), std::exp(bv)};
        const double wu = 4.0 * su, wv = 4.0 * sv;
        lu = bu - wu;
        hu = bu + wu;
        lv = bv - wv;
        hv = bv + wv;
    }
    return best;
}

}  // namespace detail

/// Unilateral deviation check at a converged equilibrium: followers against
/// the single-slot objective at fixed (R*, phi*), the leader against f(R).
inline DeviationReport verify_nash(const EquilibriumResult& eq, const RoundContext& ctx,
                                   const GridSpec& grid = {}, double tolerance = 1e-6) {
    DeviationReport rep;
    rep.tolerance = tolerance;
    rep.followers.resize(ctx.size());
    const PerRoundBudget budget{1.0, 1.0};
    for (std::size_t k = 0; k < ctx.size(); ++k) {
        auto obj = [&](double b, double e) {
            return drift_plus_penalty_value({b, e}, eq.r_star, eq.phi_star, ctx.profiles[k],
                                            ctx.queues[k], budget, ctx.weights);
        };
        GridSpec g = grid;
        const auto& s = eq.strategies[k];
        g.lo = std::min(g.lo, 0.1 * std::min(s.b, s.eps));
        g.hi = std::max(g.hi, 10.0 * std::max(s.b, s.eps));
        const NodeStrategy best = detail::feasible_grid_search(obj, g);
        const double base = obj(s.b, s.eps);
        const double imp = base - obj(best.b, best.eps);
        rep.followers[k] = {best, imp};
        rep.max_follower_improvement = std::max(rep.max_follower_improvement, imp);
    }

    std::vector<QualityFactors> f(ctx.size());
    for (std::size_t k = 0; k < ctx.size(); ++k)
        f[k] = quality_factors(ctx.profiles[k], ctx.queues[k].q, ctx.queues[k].z, eq.phi_star,
                               ctx.weights);
    auto fr = [&](double r) { return server_objective(r, ctx.t, ctx.horizon, ctx.kappas, ctx.lc, ctx.weights, f); };
    rep.leader_best_r = widening_minimize(fr, grid);
    const double base = fr(eq.r_star);
    rep.leader_improvement = (base - fr(rep.leader_best_r)) / std::abs(base);

    rep.verdict = rep.max_follower_improvement <= tolerance && rep.leader_improvement <= tolerance;
    return rep;
}

}  // namespace fedbud
