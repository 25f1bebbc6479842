#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fedbud/equilibrium.hpp"
#include "fedbud/experiments.hpp"
#include "test_support.hpp"

using namespace fedbud;
using fedbud::testing::rel_err;

namespace {

// Root of phi + log(phi) = -log 3, by scipy.optimize.brentq (xtol 1e-16).
constexpr double kUnitThreeRoot = 0.2576276530497367;

// N identical queue-free nodes with a_k = b_k = 1 and leader coefficient c.
struct UnitInstance {
    std::vector<NodeProfile> profiles;
    std::vector<VirtualQueuePair> queues;
    RoundContext ctx;

    UnitInstance(std::size_t n, double c)
        : profiles(n, NodeProfile{0.5, 0.5, 1.0, 1.0}),
          queues(n),
          ctx{profiles, queues, {0.5, 0.25, 1.0}, {1.0, 1.0, 1.0, 1.0, 2}, {2.0 / c, 1.0}, 0, 1} {}
};

}  // namespace

TEST(ReducedMap, Examples) {
    EXPECT_NEAR(reduced_map(1.0, -std::log(3.0), 3), -1.0986122886681098, 1e-15);
    EXPECT_NEAR(reduced_map(std::numbers::e, 5.0, 3), 4.0, 1e-15);
    EXPECT_THROW(reduced_map(0.0, 1.0, 3), DomainError);
    EXPECT_THROW(reduced_map(-1.0, 1.0, 3), DomainError);
}

TEST(ReducedMap, SlopeExceedsOneBelowThirdOfN) {
    const std::size_t n = 12;
    for (double phi : {0.5, 1.0, 3.0, 3.9, 4.1, 8.0}) {
        const double h = 1e-6 * phi;
        const double slope = (reduced_map(phi + h, 0.0, n) - reduced_map(phi - h, 0.0, n)) / (2.0 * h);
        EXPECT_NEAR(slope, -static_cast<double>(n) / (3.0 * phi), 1e-6);
        EXPECT_EQ(std::abs(slope) > 1.0, phi < n / 3.0);
    }
}

TEST(ReducedMap, ConstantsOfUnitInstance) {
    UnitInstance u(3, 1.0);
    const auto rc = ReducedMapConstants::from_context(u.ctx);
    EXPECT_NEAR(rc.k_t, -std::log(3.0), 1e-15);
    EXPECT_NEAR(rc.c_t, 1.0, 1e-15);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_DOUBLE_EQ(rc.a[k], 1.0);
        EXPECT_DOUBLE_EQ(rc.b[k], 1.0);
    }
    EXPECT_THROW(ReducedMapConstants::from_parts({1.0}, {1.0, 2.0}, 1.0), std::invalid_argument);
    EXPECT_THROW(ReducedMapConstants::from_parts({1.0}, {1.0}, 0.0), DomainError);
}

TEST(ReducedMap, MatchesStageCompositionWhenUnclamped) {
    fedbud::testing::LogUniform draw(31, 0.5, 2.0);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 1 + i % 7;
        std::vector<NodeProfile> p(n);
        std::vector<VirtualQueuePair> q(n);
        for (std::size_t k = 0; k < n; ++k) {
            p[k] = {draw() * 0.1, draw() * 0.1, 1.0, 1.0};
            q[k] = {draw() * 0.1, draw() * 0.1};
        }
        const RoundContext ctx{p, q, {0.5, 0.25, 1.0}, {1.0, 1.0, 1.0, 1.0, 2}, {1e-3, draw()}, 0, 1};
        const auto rc = ReducedMapConstants::from_context(ctx);
        const double phi = draw();
        const auto ev = evaluate_stages(phi, ctx);
        if (ev.clamp_count > 0) continue;
        EXPECT_NEAR(ev.log_sum, reduced_map(phi, rc), 1e-10 * std::max(1.0, std::abs(ev.log_sum)));
    }
}

TEST(SolveReduced, Examples) {
    EXPECT_NEAR(solve_reduced_fixed_point(-std::log(3.0), 3), kUnitThreeRoot, 1e-10);
    EXPECT_NEAR(solve_reduced_fixed_point(1.0, 3), 1.0, 1e-12);
}

TEST(SolveReduced, ResidualWithinTolerance) {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(-200.0, 200.0);
    for (int i = 0; i < 2000; ++i) {
        const double k = u(gen);
        const std::size_t n = 1 + gen() % 60;
        const double tol = 1e-10;
        const double phi = solve_reduced_fixed_point(k, n, tol);
        const double h = phi + n / 3.0 * std::log(phi) - k;
        EXPECT_LE(std::abs(h), std::max(tol, 4.0 * std::numeric_limits<double>::epsilon() * std::abs(k)))
            << "k=" << k << " n=" << n;
    }
}

TEST(SolveReduced, RejectsNonFiniteConstant) {
    EXPECT_THROW(solve_reduced_fixed_point(std::numeric_limits<double>::infinity(), 3), std::runtime_error);
    EXPECT_THROW(solve_reduced_fixed_point(std::numeric_limits<double>::quiet_NaN(), 3), std::runtime_error);
}

TEST(SolveReduced, UniqueRoot) {
    // h is strictly increasing: sign changes exactly once along a fine scan
    for (double k : {-30.0, -1.0, 0.0, 2.5, 40.0}) {
        const std::size_t n = 9;
        int changes = 0;
        double prev = 1e-12 + n / 3.0 * std::log(1e-12) - k;
        for (double phi = 1e-12; phi < 1e3; phi *= 1.01) {
            const double h = phi + n / 3.0 * std::log(phi) - k;
            if ((h > 0.0) != (prev > 0.0)) ++changes;
            prev = h;
        }
        EXPECT_EQ(changes, 1);
    }
}

TEST(FixedPoint, UnitThreeNodeExample) {
    UnitInstance u(3, 1.0);
    const auto eq = fixed_point_iterate(u.ctx, {});
    ASSERT_TRUE(eq.converged);
    EXPECT_EQ(eq.clamp_count, 0);
    EXPECT_NEAR(eq.phi_star, kUnitThreeRoot, 1e-8);
    EXPECT_LE(eq.iterations, 200);
}

TEST(FixedPoint, SingleNodeExample) {
    UnitInstance u(1, std::exp(3.0));
    const auto eq = fixed_point_iterate(u.ctx, {});
    ASSERT_TRUE(eq.converged);
    EXPECT_NEAR(eq.phi_star, 1.0, 1e-8);
}

TEST(FixedPoint, PlugBackReproducesEstimate) {
    for (std::uint32_t i = 0; i < 200; ++i) {
        const auto inst = random_instance(41, i);
        const auto ctx = inst.context();
        EquilibriumSettings s;
        const auto eq = fixed_point_iterate(ctx, s);
        ASSERT_TRUE(eq.converged) << "instance " << i;
        std::vector<QualityFactors> f(ctx.size());
        for (std::size_t k = 0; k < ctx.size(); ++k)
            f[k] = quality_factors(ctx.profiles[k], ctx.queues[k].q, ctx.queues[k].z, eq.phi_star, ctx.weights);
        const double r = server_optimal_payment(ctx.t, ctx.horizon, ctx.kappas, ctx.lc, ctx.weights, f);
        EXPECT_EQ(r, eq.r_star);
        double g = 0.0;
        for (std::size_t k = 0; k < ctx.size(); ++k) {
            const auto br = node_best_response(r, eq.phi_star, ctx.profiles[k], ctx.queues[k].q,
                                               ctx.queues[k].z, ctx.weights);
            EXPECT_EQ(br.b, eq.strategies[k].b);
            EXPECT_EQ(br.eps, eq.strategies[k].eps);
            EXPECT_GE(br.product(), 1.0 - 1e-12);
            g += std::max(std::log(br.product()), 0.0);
        }
        EXPECT_LE(std::abs(g - eq.phi_star), s.tol);
        EXPECT_LE(eq.residual, s.tol);
    }
}

TEST(FixedPoint, AgreesWithReducedSolverOnUnclampedInstances) {
    int unclamped = 0;
    for (std::uint32_t i = 0; i < 20000 && unclamped < 120; ++i) {
        const auto inst = random_instance(43, i);
        const auto ctx = inst.context();
        const auto eq = fixed_point_iterate(ctx, {});
        ASSERT_TRUE(eq.converged);
        ASSERT_LE(eq.iterations, 200);
        if (eq.clamp_count > 0) continue;
        ++unclamped;
        const double ref = solve_reduced_fixed_point(ReducedMapConstants::from_context(ctx));
        EXPECT_LT(rel_err(eq.phi_star, ref), 1e-6) << "instance " << i;
    }
    EXPECT_EQ(unclamped, 120);
}

TEST(FixedPoint, IterationBudgetOnRandomSuite) {
    int worst = 0;
    for (std::uint32_t i = 0; i < 5000; ++i) {
        const auto inst = random_instance(47, i);
        const auto eq = fixed_point_iterate(inst.context(), {});
        ASSERT_TRUE(eq.converged) << "instance " << i;
        worst = std::max(worst, eq.iterations);
    }
    EXPECT_LE(worst, 200);
}

TEST(FixedPoint, StartingPointDoesNotChangeTheFixedPoint) {
    for (std::uint32_t i = 0; i < 100; ++i) {
        const auto inst = random_instance(53, i);
        const auto ctx = inst.context();
        EquilibriumSettings s;
        const auto base = fixed_point_iterate(ctx, s);
        ASSERT_TRUE(base.converged);
        for (double phi0 : {1e-4, 0.3, 50.0, 1e4}) {
            s.phi0 = phi0;
            const auto other = fixed_point_iterate(ctx, s);
            ASSERT_TRUE(other.converged);
            EXPECT_NEAR(other.phi_star, base.phi_star, 1e-6 * std::max(1.0, base.phi_star));
        }
    }
}

TEST(FixedPoint, FixedDampingOscillatesAndSaysSo) {
    // theta = 0.5 fails to contract once phi* < N/9; the unit instance has phi* ~ 0.258 < 1/3
    UnitInstance u(3, 1.0);
    EquilibriumSettings s;
    s.adaptive_damping = false;
    const auto eq = fixed_point_iterate(u.ctx, s);
    EXPECT_FALSE(eq.converged);
    EXPECT_EQ(eq.iterations, s.max_iters);
    EXPECT_GT(eq.residual, s.tol);
}

TEST(FixedPoint, FixedDampingConvergesWhenContracting) {
    // phi* = 1 > N/9 for N = 1
    UnitInstance u(1, std::exp(3.0));
    EquilibriumSettings s;
    s.adaptive_damping = false;
    const auto eq = fixed_point_iterate(u.ctx, s);
    ASSERT_TRUE(eq.converged);
    EXPECT_NEAR(eq.phi_star, 1.0, 1e-8);
}

TEST(FixedPoint, IterationCapReportedHonestly) {
    UnitInstance u(3, 1.0);
    EquilibriumSettings s;
    s.max_iters = 2;
    const auto eq = fixed_point_iterate(u.ctx, s);
    EXPECT_FALSE(eq.converged);
    EXPECT_EQ(eq.iterations, 2);
}

TEST(FixedPoint, TraceRecordsEveryIteration) {
    UnitInstance u(3, 1.0);
    std::vector<FixedPointTracePoint> trace;
    const auto eq = fixed_point_iterate(u.ctx, {}, &trace);
    ASSERT_EQ(static_cast<int>(trace.size()), eq.iterations);
    EXPECT_DOUBLE_EQ(trace.front().phi, default_phi0(3));
    EXPECT_EQ(trace.back().phi, eq.phi_star);
    EXPECT_EQ(trace.back().r, eq.r_star);
    for (int i = 0; i < eq.iterations; ++i) EXPECT_EQ(trace[static_cast<std::size_t>(i)].iteration, i);
}

TEST(FixedPoint, DefaultStart) {
    EXPECT_DOUBLE_EQ(default_phi0(3), 3.0 * std::log(2.0));
    EXPECT_DOUBLE_EQ(default_phi0(1), 1.0 / 3.0 + 1.0);
    EXPECT_DOUBLE_EQ(default_phi0(100), 100.0 * std::log(2.0));
}

TEST(FixedPoint, InputErrors) {
    std::vector<NodeProfile> none;
    std::vector<VirtualQueuePair> nq;
    const RoundContext empty{none, nq, {0.5, 0.25, 1.0}, {1.0, 1.0, 1.0, 1.0, 2}, {1.0, 1.0}, 0, 1};
    EXPECT_THROW(fixed_point_iterate(empty, {}), std::invalid_argument);
    UnitInstance u(2, 1.0);
    EquilibriumSettings bad;
    bad.damping = 0.0;
    EXPECT_THROW(fixed_point_iterate(u.ctx, bad), DomainError);
    bad = {};
    bad.tol = 0.0;
    EXPECT_THROW(fixed_point_iterate(u.ctx, bad), DomainError);
    bad = {};
    bad.damping = 1.5;
    EXPECT_THROW(fixed_point_iterate(u.ctx, bad), DomainError);
}

TEST(EvaluateStages, CountsClampsAndFloorsLogs) {
    // expensive nodes and a tiny payment push every node onto the boundary
    std::vector<NodeProfile> p(4, NodeProfile{50.0, 50.0, 1.0, 1.0});
    std::vector<VirtualQueuePair> q(4, VirtualQueuePair{10.0, 10.0});
    const RoundContext ctx{p, q, {0.5, 0.25, 1.0}, {1.0, 1.0, 1.0, 1.0, 2}, {100.0, 1.0}, 0, 1};
    const auto ev = evaluate_stages(1.0, ctx);
    EXPECT_EQ(ev.clamp_count, 4);
    EXPECT_NEAR(ev.log_sum, 0.0, 1e-14);
    const auto eq = fixed_point_iterate(ctx, {});
    ASSERT_TRUE(eq.converged);
    // b*eps grows like phi^(-1/3) as phi -> 0, so the fixed point stays positive
    EXPECT_GT(eq.phi_star, 0.0);
    EXPECT_LT(eq.phi_star, 1.0);
    EXPECT_LE(eq.residual, 1e-8);
}
