#pragma once

// Payment allocation, node and server costs, utilities, and the baseline
// schedules used in comparison runs.

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <vector>

#include "fedbud/common.hpp"
#include "fedbud/rng.hpp"
#include "fedbud/strategy_core.hpp"

namespace fedbud {

struct PaymentShare {
    std::size_t node_id = 0;
    double amount = 0.0;
};

/// Products within this distance below 1 are treated as sitting on the
/// boundary (they come out of the clamp with rounding error).
inline constexpr double kProductSlack = 1e-12;

inline std::vector<PaymentShare> allocate_payment(std::span<const NodeStrategy> strategies,
                                                  double r) {
    require_domain(r >= 0.0, "payment R must be non-negative");
    std::vector<double> logs(strategies.size());
    double denom = 0.0;
    for (std::size_t k = 0; k < strategies.size(); ++k) {
        const double p = strategies[k].product();
        if (!(p >= 1.0 - kProductSlack)) {
            std::ostringstream os;
            os << "node " << k << " has b*eps=" << p << " < 1; shares would exceed R";
            throw DomainError(os.str());
        }
        logs[k] = std::max(std::log(p), 0.0);
        denom += logs[k];
    }
    std::vector<PaymentShare> out(strategies.size());
    for (std::size_t k = 0; k < strategies.size(); ++k) {
        out[k].node_id = k;
        out[k].amount = denom > 0.0 ? std::max(0.0, logs[k] / denom * r) : 0.0;
    }
    return out;
}

inline double node_round_cost(const NodeStrategy& s, const NodeProfile& profile) {
    return profile.alpha * s.b * s.b + profile.beta * s.eps * s.eps;
}

struct LedgerRow {
    int t = 0;
    std::size_t node_id = 0;
    double payment = 0.0;
    double cost = 0.0;
    double utility_inc = 0.0;

    static LedgerRow make(int t, std::size_t node_id, double payment, double cost) {
        return {t, node_id, payment, cost, payment - cost};
    }
};

/// Rows must cover rounds 0..T-1 of a single node, each exactly once.
inline double node_total_utility(std::span<const LedgerRow> rows, int horizon) {
    require_domain(horizon >= 1, "horizon must be at least 1");
    if (rows.size() != static_cast<std::size_t>(horizon))
        throw std::invalid_argument("ledger must hold exactly one row per round");
    std::vector<char> seen(static_cast<std::size_t>(horizon), 0);
    double total = 0.0;
    for (const auto& row : rows) {
        if (row.node_id != rows.front().node_id)
            throw std::invalid_argument("ledger rows belong to different nodes");
        if (row.t < 0 || row.t >= horizon || seen[static_cast<std::size_t>(row.t)])
            throw std::invalid_argument("ledger has a missing or duplicated round");
        seen[static_cast<std::size_t>(row.t)] = 1;
        total += row.utility_inc;
    }
    return total;
}

/// sum_k kappa1^(T-1-t) kappa3 eta^2 C^2 / (B^2 eps_k^2) for one round.
inline double round_accuracy_loss(int t, int horizon, std::span<const NodeStrategy> strategies,
                                  const KappaSet& kappas, const LearningConstants& lc) {
    double total_b = 0.0;
    for (const auto& s : strategies) total_b += s.b;
    require_domain(total_b > 0.0, "total data volume B must be positive");
    const double weight = accuracy_weight(t, horizon, kappas, lc);
    double loss = 0.0;
    for (const auto& s : strategies) {
        require_domain(s.eps > 0.0, "privacy budget must be positive");
        loss += weight / (total_b * total_b * s.eps * s.eps);
    }
    return loss;
}

inline double server_round_cost(int t, int horizon, double r,
                                std::span<const NodeStrategy> strategies, const KappaSet& kappas,
                                const LearningConstants& lc, const GameWeights& w) {
    return w.gamma1 * r + round_accuracy_loss(t, horizon, strategies, kappas, lc);
}

inline double server_total_cost(std::span<const double> payments,
                                std::span<const std::vector<NodeStrategy>> strategies,
                                const KappaSet& kappas, const LearningConstants& lc,
                                const GameWeights& w, int horizon) {
    if (payments.size() != static_cast<std::size_t>(horizon) ||
        strategies.size() != static_cast<std::size_t>(horizon))
        throw std::invalid_argument("server cost needs complete trajectories of length T");
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
        const auto i = static_cast<std::size_t>(t);
        total += server_round_cost(t, horizon, payments[i], strategies[i], kappas, lc, w);
    }
    return total;
}

enum class BaselineKind { constant, random };

struct BaselineSpec {
    BaselineKind kind = BaselineKind::constant;
    double matched_average = 1.0;
    double constant_factor = 0.5;  // constant schedule value = factor * matched_average
};

inline std::vector<double> make_baseline_schedule(const BaselineSpec& spec, int horizon,
                                                  std::uint64_t seed, std::uint32_t stream = 0) {
    require_domain(spec.matched_average > 0.0, "matched average must be positive");
    require_domain(horizon >= 1, "horizon must be at least 1");
    const auto n = static_cast<std::size_t>(horizon);
    if (spec.kind == BaselineKind::constant) {
        require_domain(spec.constant_factor > 0.0 && spec.constant_factor != 1.0,
                       "constant baseline factor must be positive and differ from 1");
        return std::vector<double>(n, spec.constant_factor * spec.matched_average);
    }
    PhiloxStream rng(seed, stream, 0, StreamPurpose::baseline);
    std::vector<double> values(n);
    double sum = 0.0;
    for (auto& v : values) {
        v = 2.0 * spec.matched_average * rng.uniform_open_closed();
        sum += v;
    }
    const double scale = spec.matched_average * static_cast<double>(n) / sum;
    for (auto& v : values) v *= scale;
    return values;
}

}  // namespace fedbud
