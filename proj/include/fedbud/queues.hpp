#pragma once

// Per-node virtual queues enforcing the long-term resource budgets, and
// the drift-plus-penalty single-slot objective each node minimises.

#include <cmath>

#include "fedbud/common.hpp"
#include "fedbud/strategy_core.hpp"

namespace fedbud {

struct VirtualQueuePair {
    double q = 0.0;  // computation queue (squared data volume)
    double z = 0.0;  // privacy queue (squared budget)
};

struct PerRoundBudget {
    double n_slot = 0.0;
    double m_slot = 0.0;

    static PerRoundBudget from_profile(const NodeProfile& p, int horizon) {
        require_domain(horizon >= 1, "horizon must be at least 1");
        require_domain(p.n_cap > 0.0 && p.m_cap > 0.0, "resource budgets must be positive");
        return {p.n_cap / horizon, p.m_cap / horizon};
    }
};

inline double update_queue(double current, double usage, double slot_budget) {
    require_domain(current >= 0.0, "queue value must be non-negative");
    require_domain(usage >= 0.0, "usage must be non-negative");
    require_domain(slot_budget > 0.0, "slot budget must be positive");
    return std::max(current + usage - slot_budget, 0.0);
}

inline VirtualQueuePair update_queues(const VirtualQueuePair& current, const NodeStrategy& s,
                                      const PerRoundBudget& budget) {
    return {update_queue(current.q, s.b * s.b, budget.n_slot),
            update_queue(current.z, s.eps * s.eps, budget.m_slot)};
}

inline double drift_plus_penalty_value(const NodeStrategy& s, double r, double phi,
                                       const NodeProfile& profile, const VirtualQueuePair& pair,
                                       const PerRoundBudget& budget, const GameWeights& w) {
    require_domain(s.b > 0.0 && s.eps > 0.0, "strategy coordinates must be positive");
    require_domain(phi > 0.0, "mean-field estimate phi must be positive");
    const double b2 = s.b * s.b;
    const double e2 = s.eps * s.eps;
    return w.gamma2 * (profile.alpha * b2 + profile.beta * e2 - std::log(s.b * s.eps) * r / phi) +
           pair.q * (b2 - budget.n_slot) + pair.z * (e2 - budget.m_slot);
}

}  // namespace fedbud
