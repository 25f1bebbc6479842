#pragma once

// Convergence upper bound on E[F(w^T) - F(w*)]: closed-form double sum and
// the one-round recursion it unrolls, plus the exact non-iid degree on the
// synthetic task.

#include <cmath>
#include <span>
#include <sstream>
#include <vector>

#include "fedbud/common.hpp"
#include "fedbud/strategy_core.hpp"
#include "fedbud/task.hpp"

namespace fedbud {

struct RoundBoundInputs {
    std::vector<double> b;        // per-node data volume B_k
    std::vector<double> eps;      // per-node privacy budget
    std::vector<double> lambdas;  // per-node non-iid degree

    double total_b() const {
        double s = 0.0;
        for (double v : b) s += v;
        return s;
    }

    void validate() const {
        if (b.empty() || b.size() != eps.size() || b.size() != lambdas.size())
            throw std::invalid_argument("bound inputs need matching, non-empty per-node vectors");
        for (std::size_t k = 0; k < b.size(); ++k) {
            require_domain(b[k] > 0.0 && eps[k] > 0.0, "bound inputs must be positive");
            require_domain(lambdas[k] >= 0.0, "non-iid degree must be non-negative");
        }
    }
};

struct BoundReport {
    double e0 = 0.0;
    double closed_form = 0.0;
    std::vector<double> recursion_trace;  // E_1 .. E_T
};

inline double heterogeneity_term(const RoundBoundInputs& in) {
    const double total = in.total_b();
    double s = 0.0;
    for (std::size_t k = 0; k < in.b.size(); ++k) s += in.b[k] / total * in.lambdas[k];
    return s;
}

/// sum_k eta^2 C^2 / (B^2 eps_k^2)
inline double noise_term(const RoundBoundInputs& in, const LearningConstants& lc) {
    const double total = in.total_b();
    const double num = lc.eta * lc.eta * lc.big_c * lc.big_c;
    double s = 0.0;
    for (double e : in.eps) s += num / (total * total * e * e);
    return s;
}

inline double round_drive(const RoundBoundInputs& in, const KappaSet& k,
                          const LearningConstants& lc) {
    return k.kappa2 * heterogeneity_term(in) + k.kappa3 * noise_term(in, lc);
}

inline double one_round_recursion(double e_t, const RoundBoundInputs& in, const KappaSet& k,
                                  const LearningConstants& lc) {
    require_domain(e_t >= 0.0, "gap bound must be non-negative");
    in.validate();
    return k.kappa1 * e_t + round_drive(in, k, lc);
}

inline BoundReport bound_after_T(double e0, std::span<const RoundBoundInputs> rounds, int horizon,
                                 const KappaSet& k, const LearningConstants& lc) {
    require_domain(horizon >= 1, "horizon must be at least 1");
    require_domain(e0 >= 0.0, "initial gap must be non-negative");
    if (rounds.size() != static_cast<std::size_t>(horizon)) {
        std::ostringstream os;
        os << "bound needs " << horizon << " rounds of inputs, got " << rounds.size();
        throw std::invalid_argument(os.str());
    }
    if (!k.is_contraction()) {
        std::ostringstream os;
        os << "kappa1=" << k.kappa1 << " is not in (0, 1); evaluating a non-contracting bound";
        warn(os.str());
    }

    BoundReport report;
    report.e0 = e0;
    report.recursion_trace.reserve(rounds.size());
    double e = e0;
    for (const auto& in : rounds) {
        e = one_round_recursion(e, in, k, lc);
        report.recursion_trace.push_back(e);
    }

    double closed = std::pow(k.kappa1, horizon) * e0;
    for (int t = 0; t < horizon; ++t)
        closed += std::pow(k.kappa1, horizon - 1 - t) *
                  round_drive(rounds[static_cast<std::size_t>(t)], k, lc);
    report.closed_form = closed;
    return report;
}

/// |grad F_k(w) - grad F(w)| with F_k the node's full-pool objective.
inline double estimate_lambda(const Vec& w, const DataPool& node_pool, const SyntheticTask& task) {
    if (node_pool.size() == 0) throw std::invalid_argument("non-iid degree of an empty pool");
    return (pool_gradient(node_pool, w, task.mu) - global_gradient(task, w)).norm();
}

}  // namespace fedbud
