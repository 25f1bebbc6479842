#pragma once

// Synthetic ridge-regression task split over nodes. Per-point loss
//   f(w; x, y) = 0.5 (x.w - y)^2 + 0.5 mu |w|^2,
// features rescaled so that max |x|^2 = rho - mu. Every per-point Hessian
// x x^T + mu I then has spectral norm <= rho, and the pooled objective is
// mu-strongly convex, so both constants hold exactly.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fedbud/common.hpp"
#include "fedbud/rng.hpp"

namespace fedbud {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct DataPool {
    Mat x;  // one row per data point
    Vec y;
    double target_shift = 0.0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(x.rows()); }
};

struct TaskSpec {
    int dim = 10;
    int nodes = 10;
    int pool_size = 400;
    double shift = 0.01;        // scale of the per-node feature-mean and target offsets
    double label_noise = 0.01;  // std of the additive target noise
    double rho = 1.0;
    double mu = 0.5;

    void validate() const {
        require_domain(dim >= 1, "task dimension must be at least 1");
        require_domain(nodes >= 1, "task needs at least one node");
        require_domain(pool_size >= 1, "pool size must be at least 1");
        require_domain(shift >= 0.0 && label_noise >= 0.0, "shift and label noise must be >= 0");
        require_domain(mu > 0.0 && rho > mu, "task needs 0 < mu < rho");
    }
};

struct SyntheticTask {
    int dim = 0;
    double rho = 0.0;
    double mu = 0.0;
    std::vector<DataPool> pools;
    Vec w_true;
    Vec w_star;
    Mat hessian;  // pooled X^T X / n + mu I
    Vec xty;      // pooled X^T y / n
    double f_star = 0.0;

    std::size_t total_points() const {
        std::size_t n = 0;
        for (const auto& p : pools) n += p.size();
        return n;
    }
};

/// Gradient of the mean per-point loss over the given rows of a pool.
template <class Rows>
Vec sample_gradient(const DataPool& pool, const Rows& rows, const Vec& w, double mu) {
    if (rows.empty()) throw std::invalid_argument("gradient over an empty sample");
    Vec g = Vec::Zero(w.size());
    for (auto i : rows) {
        const auto r = static_cast<Eigen::Index>(i);
        g.noalias() += pool.x.row(r).transpose() * (pool.x.row(r).dot(w) - pool.y(r));
    }
    g /= static_cast<double>(rows.size());
    g.noalias() += mu * w;
    return g;
}

inline Vec pool_gradient(const DataPool& pool, const Vec& w, double mu) {
    if (pool.size() == 0) throw std::invalid_argument("gradient over an empty pool");
    Vec g = pool.x.transpose() * (pool.x * w - pool.y);
    g /= static_cast<double>(pool.size());
    g.noalias() += mu * w;
    return g;
}

inline Vec global_gradient(const SyntheticTask& task, const Vec& w) {
    return task.hessian * w - task.xty;
}

inline double global_objective(const SyntheticTask& task, const Vec& w) {
    double sum = 0.0;
    for (const auto& pool : task.pools) sum += 0.5 * (pool.x * w - pool.y).squaredNorm();
    return sum / static_cast<double>(task.total_points()) + 0.5 * task.mu * w.squaredNorm();
}

/// F(w) - F(w*) = 0.5 (w - w*)^T H (w - w*) for the quadratic objective.
inline double global_gap(const Vec& w, const SyntheticTask& task) {
    const Vec d = w - task.w_star;
    return std::max(0.5 * d.dot(task.hessian * d), 0.0);
}

inline SyntheticTask generate_task(const TaskSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto d = static_cast<Eigen::Index>(spec.dim);
    const auto n = static_cast<Eigen::Index>(spec.pool_size);

    SyntheticTask task;
    task.dim = spec.dim;
    task.rho = spec.rho;
    task.mu = spec.mu;

    PhiloxStream head(seed, static_cast<std::uint32_t>(spec.nodes), 0, StreamPurpose::task);
    task.w_true.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) task.w_true(j) = head.normal();

    std::vector<Vec> label_noise(static_cast<std::size_t>(spec.nodes));
    double max_sq = 0.0;
    task.pools.resize(static_cast<std::size_t>(spec.nodes));
    for (int k = 0; k < spec.nodes; ++k) {
        PhiloxStream rng(seed, static_cast<std::uint32_t>(k), 0, StreamPurpose::task);
        auto& pool = task.pools[static_cast<std::size_t>(k)];
        pool.target_shift = spec.shift * rng.normal();
        Vec centre(d);
        for (Eigen::Index j = 0; j < d; ++j) centre(j) = spec.shift * rng.normal();
        pool.x.resize(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < d; ++j) pool.x(i, j) = centre(j) + rng.normal();
        auto& noise = label_noise[static_cast<std::size_t>(k)];
        noise.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) noise(i) = spec.label_noise * rng.normal();
        max_sq = std::max(max_sq, pool.x.rowwise().squaredNorm().maxCoeff());
    }
    if (!(max_sq > 0.0)) throw std::runtime_error("generated features are all zero");

    const double scale = std::sqrt((spec.rho - spec.mu) / max_sq);
    const double total = static_cast<double>(spec.nodes) * static_cast<double>(n);
    task.hessian = Mat::Zero(d, d);
    task.xty = Vec::Zero(d);
    for (int k = 0; k < spec.nodes; ++k) {
        auto& pool = task.pools[static_cast<std::size_t>(k)];
        pool.x *= scale;
        pool.y = pool.x * task.w_true + label_noise[static_cast<std::size_t>(k)];
        pool.y.array() += pool.target_shift;
        task.hessian.noalias() += pool.x.transpose() * pool.x;
        task.xty.noalias() += pool.x.transpose() * pool.y;
    }
    task.hessian /= total;
    task.xty /= total;
    task.hessian.diagonal().array() += spec.mu;

    task.w_star = task.hessian.ldlt().solve(task.xty);
    task.f_star = global_objective(task, task.w_star);
    return task;
}

}  // namespace fedbud
