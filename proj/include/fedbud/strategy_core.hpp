#pragma once

// Game constants and the closed-form best responses of both sides of the
// per-round leader/follower game: edge nodes pick (data volume, privacy
// budget) given payment R and mean-field estimate phi; the server picks R.

#include <cmath>
#include <span>
#include <sstream>

#include "fedbud/common.hpp"

namespace fedbud {

struct LearningConstants {
    double eta = 1e-3;   // step size
    double big_c = 1.0;  // DP scaling constant C
    double rho = 1.0;    // smoothness constant
    double mu = 1.0;     // strong-convexity constant
    int dim = 1;         // model dimension d

    void validate() const {
        require_domain(eta > 0.0, "eta must be positive");
        require_domain(big_c > 0.0, "C must be positive");
        require_domain(rho > 0.0, "rho must be positive");
        require_domain(mu > 0.0, "mu must be positive");
        require_domain(dim >= 1, "dim must be at least 1");
    }
};

struct KappaSet {
    double kappa1 = 0.0;
    double kappa2 = 0.0;
    double kappa3 = 0.0;

    bool is_contraction() const noexcept { return kappa1 > 0.0 && kappa1 < 1.0; }
};

struct NodeProfile {
    double alpha = 0.0;  // unit computation cost
    double beta = 0.0;   // unit privacy-risk cost
    double n_cap = 0.0;  // computation budget over the horizon
    double m_cap = 0.0;  // privacy-risk budget over the horizon

    void validate() const {
        require_domain(alpha > 0.0, "alpha must be positive");
        require_domain(beta > 0.0, "beta must be positive");
        require_domain(n_cap > 0.0, "n_cap must be positive");
        require_domain(m_cap > 0.0, "m_cap must be positive");
    }
};

struct GameWeights {
    double gamma1 = 1.0;  // server payment-vs-accuracy weight
    double gamma2 = 1.0;  // node drift-plus-penalty weight

    void validate() const {
        require_domain(gamma1 > 0.0, "gamma1 must be positive");
        require_domain(gamma2 > 0.0, "gamma2 must be positive");
    }
};

struct QualityFactors {
    double x = 0.0;
    double y = 0.0;
};

struct NodeStrategy {
    double b = 0.0;    // data volume (continuous)
    double eps = 0.0;  // privacy budget

    double product() const noexcept { return b * eps; }
};

inline KappaSet compute_kappas(const LearningConstants& lc) {
    lc.validate();
    if (lc.eta > 1.0 / lc.rho) {
        std::ostringstream os;
        os << "eta=" << lc.eta << " exceeds 1/rho=" << 1.0 / lc.rho
           << "; the contraction premise of the convergence bound fails";
        throw DomainError(os.str());
    }
    KappaSet k;
    k.kappa1 = 1.0 + 2.0 * lc.mu * lc.rho * lc.eta * lc.eta - 2.0 * lc.mu * lc.eta;
    k.kappa2 = lc.rho * lc.eta * lc.eta;
    k.kappa3 = lc.rho * static_cast<double>(lc.dim) / 2.0;
    if (!k.is_contraction()) {
        std::ostringstream os;
        os << "kappa1=" << k.kappa1 << " is not in (0, 1); the bound does not contract";
        warn(os.str());
    }
    return k;
}

inline QualityFactors quality_factors(const NodeProfile& profile, double q, double z, double phi,
                                      const GameWeights& w) {
    require_domain(phi > 0.0, "mean-field estimate phi must be positive");
    require_domain(q >= 0.0 && z >= 0.0, "virtual queues must be non-negative");
    return {w.gamma2 / (2.0 * phi * (w.gamma2 * profile.alpha + q)),
            w.gamma2 / (2.0 * phi * (w.gamma2 * profile.beta + z))};
}

/// Rescales both coordinates by sqrt(1/(b*eps)) when b*eps < 1. The ratio
/// b/eps is kept, which makes the result the exact minimiser of the
/// single-slot objective on the boundary b*eps = 1. Returns true if clamped.
inline bool apply_domain_clamp(NodeStrategy& s) {
    const double p = s.product();
    if (p >= 1.0) return false;
    const double scale = std::sqrt(1.0 / p);
    s.b *= scale;
    s.eps *= scale;
    return true;
}

/// Unclamped stationary point of the single-slot objective.
inline NodeStrategy unclamped_best_response(double r, const QualityFactors& f) {
    require_domain(r > 0.0, "payment R must be positive");
    return {std::sqrt(r * f.x), std::sqrt(r * f.y)};
}

struct BestResponse {
    NodeStrategy strategy;
    bool clamped = false;
};

inline BestResponse node_best_response_detail(double r, double phi, const NodeProfile& profile,
                                              double q, double z, const GameWeights& w) {
    require_domain(r > 0.0, "payment R must be positive");
    BestResponse out;
    out.strategy = unclamped_best_response(r, quality_factors(profile, q, z, phi, w));
    out.clamped = apply_domain_clamp(out.strategy);
    return out;
}

inline NodeStrategy node_best_response(double r, double phi, const NodeProfile& profile, double q,
                                       double z, const GameWeights& w) {
    return node_best_response_detail(r, phi, profile, q, z, w).strategy;
}

/// kappa1^(T-1-t) * kappa3 * eta^2 * C^2: the weight of the noise term of
/// round t in the server's accuracy loss.
inline double accuracy_weight(int t, int horizon, const KappaSet& k, const LearningConstants& lc) {
    require_domain(horizon >= 1 && t >= 0 && t < horizon, "round index must satisfy 0 <= t < T");
    return std::pow(k.kappa1, horizon - 1 - t) * k.kappa3 * lc.eta * lc.eta * lc.big_c * lc.big_c;
}

/// c_t = 2 * accuracy_weight / gamma1.
inline double leader_coefficient(int t, int horizon, const KappaSet& k, const LearningConstants& lc,
                                 const GameWeights& w) {
    return 2.0 * accuracy_weight(t, horizon, k, lc) / w.gamma1;
}

/// sum(1/Y_k) / (sum sqrt(X_k))^2
inline double quality_aggregate(std::span<const QualityFactors> factors) {
    if (factors.empty()) throw std::invalid_argument("server payment needs at least one node");
    double inv_y = 0.0;
    double sqrt_x = 0.0;
    for (const auto& f : factors) {
        require_domain(f.x > 0.0 && f.y > 0.0, "quality factors must be positive");
        inv_y += 1.0 / f.y;
        sqrt_x += std::sqrt(f.x);
    }
    return inv_y / (sqrt_x * sqrt_x);
}

inline double server_optimal_payment(int t, int horizon, const KappaSet& k,
                                     const LearningConstants& lc, const GameWeights& w,
                                     std::span<const QualityFactors> factors) {
    const double agg = quality_aggregate(factors);
    return std::cbrt(leader_coefficient(t, horizon, k, lc, w) * agg);
}

}  // namespace fedbud
