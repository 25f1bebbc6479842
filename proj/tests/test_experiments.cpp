#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedbud/experiments.hpp"

using namespace fedbud;

namespace {

SystemConfig small() {
    SystemConfig cfg;
    cfg.nodes = 5;
    cfg.horizon = 15;
    cfg.pool_size = 60;
    cfg.sweep_seeds = 2;
    cfg.sweep_nodes = {3, 6};
    cfg.threads = 1;
    return cfg;
}

struct CsvRow {
    int t = 0;
    double phi, r, b, eps, q, z, payment, cost, utility, sigma, lambda, bound, gap;
    std::size_t node = 0;
};

std::vector<CsvRow> parse_csv(const std::string& text, std::string* header) {
    std::istringstream in(text);
    std::getline(in, *header);
    std::vector<CsvRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        EXPECT_EQ(f.size(), 15u);
        CsvRow r;
        r.t = std::stoi(f[0]);
        r.phi = std::stod(f[1]);
        r.r = std::stod(f[2]);
        r.node = std::stoul(f[3]);
        r.b = std::stod(f[4]);
        r.eps = std::stod(f[5]);
        r.q = std::stod(f[6]);
        r.z = std::stod(f[7]);
        r.payment = std::stod(f[8]);
        r.cost = std::stod(f[9]);
        r.utility = std::stod(f[10]);
        r.sigma = std::stod(f[11]);
        r.lambda = std::stod(f[12]);
        r.bound = std::stod(f[13]);
        r.gap = std::stod(f[14]);
        rows.push_back(r);
    }
    return rows;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

}  // namespace

TEST(FormatDouble, RoundTripsAndSpellsNan) {
    EXPECT_EQ(format_double(1.0), "1");
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(format_double(-2.5e-300), "-2.5e-300");
    EXPECT_EQ(format_double(std::nan("")), "nan");
    for (double v : {M_PI, 1e-17, 123456789.123456789, -0.0})
        EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(TrajectoryCsv, HeaderIsExact) {
    EXPECT_STREQ(trajectory_header(),
                 "t,phi,R,node_id,B,eps,Q,Z,payment,node_cost,utility_inc,sigma,lambda,bound_t,gap_t");
}

TEST(TrajectoryCsv, SummaryRecomputableFromCsv) {
    const auto cfg = small();
    const auto log = run_experiment(cfg, 3);
    ASSERT_TRUE(log.all_converged());
    std::ostringstream os;
    write_trajectory_csv(os, log);
    std::string header;
    const auto rows = parse_csv(os.str(), &header);
    EXPECT_EQ(header, trajectory_header());
    ASSERT_EQ(rows.size(), static_cast<std::size_t>(cfg.nodes * cfg.horizon));

    const auto s = summarize(log, cfg.lc);
    std::map<int, double> r_by_round;
    std::map<int, std::vector<NodeStrategy>> strategies;
    std::vector<double> util(5, 0.0), max_q(5, 0.0), sum_b2(5, 0.0), sum_e2(5, 0.0);
    for (const auto& row : rows) {
        r_by_round[row.t] = row.r;
        strategies[row.t].push_back({row.b, row.eps});
        util[row.node] += row.utility;
        max_q[row.node] = std::max(max_q[row.node], row.q);
        sum_b2[row.node] += row.b * row.b;
        sum_e2[row.node] += row.eps * row.eps;
    }
    double total = 0.0, server = 0.0;
    for (const auto& [t, r] : r_by_round) {
        total += r;
        server += server_round_cost(t, cfg.horizon, r, strategies[t], log.kappas, cfg.lc, log.weights);
    }
    EXPECT_TRUE(close(s.total_payment, total));
    EXPECT_TRUE(close(s.server_cost, server));
    EXPECT_TRUE(close(s.terminal_gap, rows.back().gap));
    EXPECT_TRUE(close(s.terminal_bound, rows.back().bound));
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_TRUE(close(s.node_utilities[k], util[k]));
        EXPECT_TRUE(close(s.queue_max_q[k], max_q[k]));
        const auto& p = log.profiles[k];
        EXPECT_TRUE(close(s.violation_b[k], (sum_b2[k] - p.n_cap) / p.n_cap));
        EXPECT_TRUE(close(s.violation_eps[k], (sum_e2[k] - p.m_cap) / p.m_cap));
    }

    const auto j = summary_json(s, log);
    EXPECT_EQ(j["total_payment"].get<double>(), s.total_payment);
    EXPECT_EQ(j["rounds_completed"].get<int>(), cfg.horizon);
    EXPECT_TRUE(j["aborted_round"].is_null());
}

TEST(TrajectoryCsv, GameOnlyRunsWriteNan) {
    auto cfg = small();
    RunOptions ro;
    ro.train = false;
    const auto log = run_experiment(cfg, 3, ro);
    std::ostringstream os;
    write_trajectory_csv(os, log);
    const auto text = os.str();
    const auto second = text.substr(text.find('\n') + 1);
    EXPECT_NE(second.find(",nan,nan,nan,nan\n"), std::string::npos);
    EXPECT_TRUE(summary_json(summarize(log, cfg.lc), log)["terminal_gap"].is_null());
}

TEST(FixedPointTrace, OneLinePerIteration) {
    auto cfg = small();
    std::vector<std::vector<FixedPointTracePoint>> traces;
    RunOptions ro;
    ro.train = false;
    ro.fixed_point_traces = &traces;
    const auto log = run_experiment(cfg, 4, ro);
    ASSERT_EQ(traces.size(), log.rounds.size());
    std::ostringstream os;
    write_fixed_point_trace(os, traces);
    std::size_t lines = 0;
    for (char c : os.str()) lines += c == '\n';
    std::size_t expected = 1;
    for (const auto& tr : traces) expected += tr.size();
    EXPECT_EQ(lines, expected);
    EXPECT_EQ(os.str().substr(0, 18), "t,iteration,phi,R\n");
}

TEST(SweepGamma1, PaymentsFallAsGamma1Grows) {
    const auto cfg = small();
    const auto pts = sweep_gamma1(cfg);
    ASSERT_EQ(pts.size(), 3u);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_TRUE(pts[i].all_converged);
        EXPECT_EQ(pts[i].total_payment.size(), 2u);
        EXPECT_DOUBLE_EQ(pts[i].gamma1[0], pts[0].gamma1[0] * pts[i].factor);
    }
    EXPECT_GT(pts[0].mean_total_payment, pts[1].mean_total_payment);
    EXPECT_GT(pts[1].mean_total_payment, pts[2].mean_total_payment);
}

TEST(SweepNodes, PinsGamma1AcrossNodeCounts) {
    const auto cfg = small();
    const auto c = with_nodes(cfg, 9, 2);
    EXPECT_EQ(c.nodes, 9);
    ASSERT_TRUE(c.gamma1.has_value());
    EXPECT_EQ(*c.gamma1, resolve_game(cfg, 2).weights.gamma1);
    const auto pts = sweep_nodes(cfg, false);
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(pts[0].nodes, 3);
    EXPECT_EQ(pts[1].runs.size(), 2u);
    EXPECT_TRUE(pts[0].all_converged && pts[1].all_converged);
}

TEST(CompareBaselines, EquilibriumServerCostIsLowest) {
    const auto cfg = small();
    const auto cmp = compare_baselines(cfg, 5, 7);
    ASSERT_TRUE(cmp.converged);
    ASSERT_EQ(cmp.baselines.size(), cfg.baseline_constant_factors.size() + 1);
    EXPECT_EQ(cmp.baselines.back().name, "random");
    EXPECT_EQ(cmp.baselines.front().name, "constant_x0.5");
    for (const auto& b : cmp.baselines) {
        EXPECT_TRUE(b.server_dominated) << b.name;
        EXPECT_GE(b.nodes_dominated, 0);
        EXPECT_LE(b.nodes_dominated, 5);
    }
    const auto j = comparison_json(cmp);
    EXPECT_EQ(j["baselines"].size(), cmp.baselines.size());
}

TEST(NodeTrend, Logic) {
    std::vector<BaselineComparison> rows(3);
    rows[0].eq_mean_node_raw = 10.0;
    rows[0].eq_server_cost = 5.0;
    rows[1].eq_mean_node_raw = 8.0;
    rows[1].eq_server_cost = 5.04;  // within the 1% slack
    rows[2].eq_mean_node_raw = 7.0;
    rows[2].eq_server_cost = 4.0;
    auto tc = check_node_trend(rows);
    EXPECT_TRUE(tc.utility_non_increasing);
    EXPECT_TRUE(tc.cost_non_increasing);
    rows[2].eq_mean_node_raw = 9.0;
    rows[1].eq_server_cost = 5.2;
    tc = check_node_trend(rows);
    EXPECT_FALSE(tc.utility_non_increasing);
    EXPECT_FALSE(tc.cost_non_increasing);
    EXPECT_TRUE(check_node_trend({}).utility_non_increasing);
}

TEST(RandomInstance, DeterministicAndInRange) {
    for (std::uint32_t i = 0; i < 200; ++i) {
        const auto a = random_instance(11, i);
        const auto b = random_instance(11, i);
        ASSERT_EQ(a.profiles.size(), b.profiles.size());
        EXPECT_GE(a.profiles.size(), 1u);
        EXPECT_LE(a.profiles.size(), 50u);
        EXPECT_EQ(a.weights.gamma1, b.weights.gamma1);
        for (std::size_t k = 0; k < a.profiles.size(); ++k) {
            EXPECT_EQ(a.profiles[k].alpha, b.profiles[k].alpha);
            EXPECT_GE(a.profiles[k].alpha, 1e-2);
            EXPECT_LE(a.profiles[k].alpha, 1e2);
            EXPECT_EQ(a.queues[k].z, b.queues[k].z);
        }
        const double w = accuracy_weight(0, 1, a.kappas, a.lc);
        EXPECT_GE(w, 1e-2 * (1 - 1e-12));
        EXPECT_LE(w, 1e2 * (1 + 1e-12));
    }
    EXPECT_NE(random_instance(11, 0).weights.gamma1, random_instance(12, 0).weights.gamma1);
}

TEST(VerifyRound, PassesOnRandomInstances) {
    int brute = 0, reduced = 0;
    for (std::uint32_t i = 0; i < 40 && (brute < 2 || reduced < 2); ++i) {
        const auto inst = random_instance(71, i, 6);
        const auto v = verify_round(i, inst.context(), {});
        EXPECT_TRUE(v.converged);
        EXPECT_TRUE(v.pass) << i << " " << v.reference << " err " << v.relative_error;
        (v.reference == "reduced" ? reduced : brute) += 1;
        EXPECT_EQ(verify_json(v)["index"].get<std::size_t>(), i);
    }
    EXPECT_GE(brute, 2);
    EXPECT_GE(reduced, 2);
}
