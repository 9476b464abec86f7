#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "clq/clq.hpp"

using namespace clq;

namespace {

/// Single-queue trace with prescribed queue path, no events.
Trace path_trace(const std::vector<std::int64_t>& q) {
  Trace tr(1, 1);
  const std::vector<ServiceEvent> none;
  for (std::size_t i = 1; i < q.size(); ++i) {
    const std::uint8_t a = 0;
    tr.append(none, std::span<const std::uint8_t>(&a, 1), std::span<const std::int64_t>(&q[i], 1));
  }
  return tr;
}

Trace chosen_trace(const std::vector<std::int64_t>& q, const std::vector<std::size_t>& servers, std::size_t K) {
  Trace tr(1, K);
  for (std::size_t i = 1; i < q.size(); ++i) {
    std::vector<ServiceEvent> ev;
    if (servers[i - 1] != kNoServer) ev.push_back(ServiceEvent{servers[i - 1], false, 1});
    const std::uint8_t a = 0;
    tr.append(ev, std::span<const std::uint8_t>(&a, 1), std::span<const std::int64_t>(&q[i], 1));
  }
  return tr;
}

std::vector<Trace> simulate(const SingleQueueInstance& inst, const std::string& name, std::size_t T,
                            std::size_t seeds) {
  std::vector<Trace> out;
  for (std::size_t s = 0; s < seeds; ++s) {
    auto p = make_policy(name, inst);
    out.push_back(run_single(inst, *p, T, s, RunOptions{0}));
  }
  return out;
}

}  // namespace

TEST(Series, ZeroPath) {
  const std::vector<Trace> traces{path_trace(std::vector<std::int64_t>(11, 0))};
  const auto s = time_averaged_series(traces);
  for (double x : s.avg_queue_mean) EXPECT_EQ(x, 0.0);
}

TEST(Series, LinearPath) {
  std::vector<std::int64_t> q;
  for (int t = 1; t <= 101; ++t) q.push_back(t - 1);
  const std::vector<Trace> traces{path_trace(q)};
  const auto s = time_averaged_series(traces);
  for (std::size_t T = 1; T <= 100; ++T) EXPECT_DOUBLE_EQ(s.avg_queue_mean[T - 1], (double(T) - 1.0) / 2.0);
}

TEST(Series, Errors) {
  EXPECT_THROW(time_averaged_series(std::vector<Trace>{}), EmptyInput);
  const std::vector<Trace> mixed{path_trace({0, 1}), path_trace({0, 1, 2})};
  EXPECT_THROW(time_averaged_series(mixed), GridMismatch);
}

TEST(Series, CumulativeIsNondecreasingAndUcbPeaks) {
  const auto traces = simulate(figure1_instance(), "ucb", 20000, 20);
  const auto s = time_averaged_series(traces);
  for (std::size_t i = 1; i < s.horizon; ++i) {
    EXPECT_GE(s.avg_queue_mean[i] * double(i + 1), s.avg_queue_mean[i - 1] * double(i) - 1e-9);
  }
  const auto e = clq_estimate(s);
  EXPECT_LT(e.peak_horizon, std::size_t(0.9 * 20000));
  EXPECT_FALSE(e.late_peak);
}

TEST(Clq, Examples) {
  const auto traces = simulate(figure1_instance(), "oracle-best", 2000, 5);
  const auto s = time_averaged_series(traces);
  EXPECT_EQ(clq_estimate(s, &s).value, 0.0);

  MetricSeries peak;
  peak.horizon = 4;
  peak.avg_queue_mean = {1.0, 7.3, 5.0, 2.0};
  peak.avg_queue_se = {0, 0, 0, 0};
  const auto e = clq_estimate(peak);
  EXPECT_EQ(e.value, 7.3);
  EXPECT_EQ(e.peak_horizon, 2u);

  MetricSeries other = peak;
  other.horizon = 3;
  EXPECT_THROW(clq_estimate(peak, &other), GridMismatch);
}

TEST(Clq, UcbAboveOracleAndZeroBenchmarkDominates) {
  const auto u = time_averaged_series(simulate(figure1_instance(), "ucb", 20000, 20));
  const auto o = time_averaged_series(simulate(figure1_instance(), "oracle-best", 20000, 20));
  const auto vs_oracle = clq_estimate(u, &o);
  EXPECT_GT(vs_oracle.value, 3 * vs_oracle.se);
  EXPECT_GE(clq_estimate(u).value, vs_oracle.value);
}

TEST(Clq, LatePeakFlag) {
  MetricSeries rising;
  rising.horizon = 10;
  for (int i = 0; i < 10; ++i) {
    rising.avg_queue_mean.push_back(i);
    rising.avg_queue_se.push_back(0);
  }
  EXPECT_TRUE(clq_estimate(rising).late_peak);
  const auto r = running_clq(rising);
  EXPECT_EQ(r.back(), 9.0);
}

TEST(Sar, Examples) {
  const auto inst = figure1_instance();
  const std::vector<std::int64_t> q{0, 1, 1, 1, 0};
  const auto best = sar_single(chosen_trace(q, {kNoServer, 4, 4, 4}, 5), inst, 0.1);
  for (double x : best) EXPECT_EQ(x, 0.0);
  const auto mid = sar_single(chosen_trace(q, {kNoServer, 1, 1, 4}, 5), inst, 0.1);
  EXPECT_NEAR(mid[1], 0.15, 1e-12);
  EXPECT_NEAR(mid[3], 0.30, 1e-12);
  // within eps/2 of the best rate: clipped
  const SingleQueueInstance close{0.3, {0.5, 0.47}};
  const auto clipped = sar_single(chosen_trace({0, 1, 1}, {1, 1}, 2), close, 0.1);
  EXPECT_EQ(clipped.back(), 0.0);
  EXPECT_THROW(sar_single(chosen_trace(q, {kNoServer, 1, 1, 4}, 5), inst, 0.0), ParameterError);
}

TEST(Sar, NondecreasingFromZero) {
  const auto inst = figure1_instance();
  for (const auto& tr : simulate(inst, "round-robin", 3000, 3)) {
    const auto s = sar_single(tr, inst, 0.1);
    EXPECT_EQ(s.front(), 0.0);  // Q(1) = 0
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GE(s[i], s[i - 1]);
  }
}

TEST(Weight, Examples) {
  const auto net = make_network(2, ArrivalModel::independent(std::vector<double>{0.1, 0.1}), {0.5, 0.9},
                                singleton_schedules(2), {0, 1});
  const std::vector<std::int64_t> q{3, 1};
  EXPECT_EQ(schedule_weight(q, Schedule{}, net, false), 0.0);
  EXPECT_DOUBLE_EQ(schedule_weight(q, Schedule({0}), net, false), 1.5);
  auto tandem = tandem_instance(2, {0.9, 0.2}, 0.3);
  tandem.transitions[0] = {0.0, 8.0 / 9.0, 1.0 / 9.0};
  tandem.destinations = derive_destinations(2, tandem.transitions);
  const std::vector<std::int64_t> q2{1, 5};
  EXPECT_NEAR(schedule_weight(q2, Schedule({0}), tandem, true), -3.1, 1e-12);
}

TEST(Delta, Examples) {
  const auto net = embed(figure1_instance());
  const std::vector<std::int64_t> zero{0};
  EXPECT_EQ(delta_loss(zero, Schedule({2}), net, false), 0.0);
  const std::vector<std::int64_t> q{4};
  EXPECT_EQ(delta_loss(q, Schedule({4}), net, false), 0.0);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(delta_loss(q, Schedule({k}), net, false), 0.55 - figure1_instance().mu[k]);
  }
  EXPECT_EQ(delta_loss(q, Schedule{}, net, false), 0.55);
}

TEST(Delta, BoundsOnSimulatedTraces) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    for (auto kind : {RandomKind::multi, RandomKind::network}) {
      const auto net = random_with_slackness(3, 6, 0.1, seed, kind);
      const bool networked = !net.exit_only();
      const double cap = (networked ? 2.0 : 1.0) * double(structure_constants(net).m_sigma);
      for (const char* name : {"mw-ucb", "bp-ucb", "round-robin"}) {
        auto p = make_policy(name, net);
        const auto tr = run_network(net, *p, 2000, seed, RunOptions{0});
        for (double d : delta_series(tr, net, networked)) {
          EXPECT_GE(d, -1e-12);
          EXPECT_LE(d, cap + 1e-12);
        }
      }
    }
  }
}

TEST(SarMulti, OracleIsZeroAndConstructedSum) {
  const auto net = random_with_slackness(3, 6, 0.1, 3, RandomKind::multi);
  auto p = make_policy("oracle-mw", net);
  const auto tr = run_network(net, *p, 2000, 1, RunOptions{0});
  for (double x : sar_multi(tr, net, 0.1, false)) EXPECT_EQ(x, 0.0);

  // Single queue, rates chosen so Delta = eps = 0.25 exactly in binary.
  const SingleQueueInstance inst{0.25, {0.5, 0.75}};
  const auto e = embed(inst);
  std::vector<std::int64_t> q2(12, 1);
  q2[0] = 0;
  std::vector<std::size_t> s2(11, 0);
  s2[0] = kNoServer;
  const auto series = sar_multi(chosen_trace(q2, s2, 2), e, 0.25, false);
  EXPECT_DOUBLE_EQ(series.back(), 10 * 0.25 / 2);
  EXPECT_THROW(sar_multi(tr, net, -0.1, false), ParameterError);
}

TEST(SarMulti, EqualsSingleQueueVersionOnEmbedding) {
  const auto inst = figure1_instance();
  const auto net = embed(inst);
  for (const char* name : {"ucb", "round-robin", "fixed:1"}) {
    for (const auto& tr : simulate(inst, name, 4000, 3)) {
      EXPECT_EQ(sar_multi(tr, net, 0.1, false), sar_single(tr, inst, 0.1));
    }
  }
}

TEST(Lyapunov, ZeroTracePassesWithEquality) {
  const auto r = lyapunov_report(path_trace(std::vector<std::int64_t>(6, 0)), embed(SingleQueueInstance{0.0, {0.5}}));
  EXPECT_TRUE(r.all_pass());
  for (const auto& c : r.checks) {
    if (c.name == "l1_increase") {
      EXPECT_EQ(c.margin, 1.0);
    } else if (c.name != "l2_bounded_difference" && c.name != "delta_bounds") {
      EXPECT_EQ(c.margin, 0.0) << c.name;
    }
  }
}

TEST(Lyapunov, HandPath) {
  // Q = 0, 1, 2, 3 over T = 4: sum 6 >= 9/2
  Trace tr(1, 1);
  const std::vector<std::int64_t> q{0, 1, 2, 3};
  for (std::size_t i = 1; i < q.size(); ++i) {
    const std::uint8_t a = 1;
    tr.append({}, std::span<const std::uint8_t>(&a, 1), std::span<const std::int64_t>(&q[i], 1));
  }
  const auto r = lyapunov_report(tr, embed(SingleQueueInstance{1.0, {0.0}}));
  EXPECT_TRUE(r.all_pass());
  std::int64_t sum = 0;
  for (auto x : q) sum += x;
  EXPECT_EQ(sum, 6);
  EXPECT_GE(double(sum), 9.0 / 2.0);
}

TEST(Lyapunov, DetectsViolation) {
  // a jump of 3 in one period breaks the single-queue bound at once
  const auto r = lyapunov_report(path_trace({0, 3, 3}), embed(SingleQueueInstance{0.5, {0.5}}));
  EXPECT_FALSE(r.all_pass());
  const auto* c = r.find("single_queue_sum_vs_max");
  ASSERT_NE(c, nullptr);
  EXPECT_FALSE(c->pass);
  EXPECT_EQ(c->first_failure, 2u);
  EXPECT_FALSE(r.find("l1_increase")->pass);
}

TEST(Lyapunov, SimulatedTracesAlwaysPass) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto net = random_with_slackness(3, 5, 0.1, seed, RandomKind::network);
    for (const char* name : {"bp-ucb", "oracle-bp", "round-robin", "mw-ucb"}) {
      auto p = make_policy(name, net);
      const auto r = lyapunov_report(run_network(net, *p, 3000, seed, RunOptions{0}), net);
      EXPECT_TRUE(r.all_pass()) << name;
    }
  }
}

TEST(Lyapunov, ExportsJson) {
  const auto r = lyapunov_report(path_trace({0, 1, 1}), embed(SingleQueueInstance{0.5, {0.5}}));
  const auto j = to_json(r);
  ASSERT_TRUE(j.contains("checks"));
  for (const auto& c : j["checks"]) {
    EXPECT_TRUE(c.contains("name"));
    EXPECT_TRUE(c.contains("pass"));
    EXPECT_TRUE(c.contains("margin"));
  }
}

TEST(Bounds, FormulaValues) {
  const auto b = theorem_bounds(figure1_instance(), 0.1);
  EXPECT_NEAR(b.ucb_clq_upper, (323.0 * 5 + 64.0 * 5 * (std::log(5.0) + 2 * std::log(10.0))) / 0.1, 1e-9);
  EXPECT_NEAR(b.ucb_clq_upper, 36036.75, 0.01);
  EXPECT_FALSE(b.single_lower);
  ASSERT_TRUE(b.optimal_avg_upper);
  EXPECT_NEAR(*b.optimal_avg_upper, 5.0, 1e-12);
  StructureConstants c{1, 1, 16384};
  const auto big = theorem_bounds(1, 16384, c, 0.25, std::nullopt);
  ASSERT_TRUE(big.single_lower);
  EXPECT_NEAR(*big.single_lower, 4.0, 1e-12);
  EXPECT_FALSE(theorem_bounds(1, 16384, c, 0.3, std::nullopt).single_lower);
  EXPECT_FALSE(theorem_bounds(1, 16383, c, 0.25, std::nullopt).single_lower);
  EXPECT_THROW(theorem_bounds(figure1_instance(), 0.0), ParameterError);
}

TEST(Bounds, NetworkFormulas) {
  const auto net = tandem_instance(3, {0.8, 0.7, 0.6}, 0.4);
  const auto c = structure_constants(net);
  const double eps = 0.05;
  const auto b = theorem_bounds(net, eps);
  const double sn = std::sqrt(3.0);
  EXPECT_NEAR(b.mw_clq_upper, sn * (16.0 * 1 + 1024.0 * 3 * 9 * (1 + std::log(1.0 * 3 * 3 / eps))) / eps, 1e-6);
  EXPECT_NEAR(b.bp_clq_upper, sn * (32.0 + 4096.0 * double(c.m_dep) * 9 * (1 + std::log(3.0 * double(c.m_dep) / eps))) / eps,
              1e-6);
  EXPECT_GT(b.ucb_clq_upper, 0);
  EXPECT_FALSE(b.optimal_avg_upper);
}

TEST(Bounds, PositiveOnUnitInterval) {
  for (double eps : {0.01, 0.1, 0.5, 1.0}) {
    const auto b = theorem_bounds(figure1_instance(), eps);
    EXPECT_GT(b.ucb_clq_upper, 0);
    EXPECT_GT(b.mw_clq_upper, 0);
    EXPECT_GT(b.bp_clq_upper, 0);
    EXPECT_GT(*b.optimal_avg_upper, 0);
  }
}

TEST(SeriesCsv, ColumnsAndShortestFormatting) {
  const auto s = time_averaged_series(simulate(figure1_instance(), "ucb", 3, 2));
  std::stringstream out;
  write_series_csv(out, s);
  std::string line;
  std::getline(out, line);
  EXPECT_EQ(line, "T,avg_queue_mean,avg_queue_se,clq_running,sar_mean,sar_se,delta_mean");
  std::getline(out, line);
  EXPECT_EQ(line, "1,0,0,0,,,");
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1.0 / 3.0), "0.3333333333333333");
  EXPECT_EQ(std::stod(format_double(0.1 + 0.2)), 0.1 + 0.2);
}

TEST(Stats, ChiSquareHomogeneity) {
  const std::vector<std::uint64_t> a{50, 30, 20}, b{50, 30, 20};
  EXPECT_NEAR(chi_square_homogeneity(a, b).p_value, 1.0, 1e-12);
  const std::vector<std::uint64_t> c{90, 5, 5};
  EXPECT_LT(chi_square_homogeneity(a, c).p_value, 1e-6);
  EXPECT_THROW(chi_square_homogeneity(a, std::vector<std::uint64_t>{1, 2}), ParameterError);
  // statistic for a hand case: 2x2 table (10, 20; 20, 10) gives 20/3
  const std::vector<std::uint64_t> x{10, 20}, y{20, 10};
  EXPECT_NEAR(chi_square_homogeneity(x, y).statistic, 20.0 / 3.0, 1e-12);
}

TEST(Stats, Welford) {
  RunningStats s;
  for (double x : {2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0}) s.add(x);
  EXPECT_DOUBLE_EQ(s.mean(), 5.0);
  EXPECT_NEAR(s.variance(), 32.0 / 7.0, 1e-12);
  EXPECT_NEAR(s.se(), std::sqrt(32.0 / 7.0 / 8.0), 1e-12);
}
