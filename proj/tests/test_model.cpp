#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "clq/clq.hpp"
#include "oracles.hpp"

using namespace clq;

namespace {

NetworkInstance two_queue_one_at_a_time(double mu0, double mu1, double l0, double l1) {
  return make_network(2, ArrivalModel::independent(std::vector<double>{l0, l1}), {mu0, mu1},
                      singleton_schedules(2), {0, 1});
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST(Validate, WellFormedTwoQueueInstanceHasNoViolations) {
  EXPECT_TRUE(validate_instance(two_queue_one_at_a_time(0.6, 0.6, 0.2, 0.2)).empty());
}

TEST(Validate, SubstochasticRowIsNamed) {
  auto net = tandem_instance(2, {0.8, 0.6}, 0.5);
  net.transitions[0] = {0.0, 0.9, 0.0};
  net.destinations = derive_destinations(2, net.transitions);
  const auto v = validate_instance(net);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("row 0"), std::string::npos);
}

TEST(Validate, MissingSubsetsBreakDownwardClosure) {
  auto net = make_network(2, ArrivalModel::independent(std::vector<double>{0.1, 0.1}), {0.5, 0.5},
                          ScheduleSet({Schedule({0, 1})}), {0, 1});
  const auto v = validate_instance(net);
  EXPECT_TRUE(mentions(v, "downward"));
}

TEST(Validate, FlagsEveryKindOfDefect) {
  auto net = two_queue_one_at_a_time(0.6, 1.2, 0.2, 0.2);
  EXPECT_FALSE(validate_instance(net).empty());
  net = two_queue_one_at_a_time(0.6, 0.6, 0.2, 0.2);
  net.arrivals.probabilities[0] += 1e-6;
  EXPECT_FALSE(validate_instance(net).empty());
  net = two_queue_one_at_a_time(0.6, 0.6, 0.2, 0.2);
  net.arrivals.support[1] = net.arrivals.support[0];
  EXPECT_FALSE(validate_instance(net).empty());
  net = two_queue_one_at_a_time(0.6, 0.6, 0.2, 0.2);
  net.server_queue[1] = 5;
  EXPECT_FALSE(validate_instance(net).empty());
  net = two_queue_one_at_a_time(0.6, 0.6, 0.2, 0.2);
  net.destinations[0] = {1};
  EXPECT_FALSE(validate_instance(net).empty());
}

TEST(Validate, DeterministicOutput) {
  auto net = two_queue_one_at_a_time(1.5, -0.2, 0.2, 0.2);
  EXPECT_EQ(validate_instance(net), validate_instance(net));
  EXPECT_GE(validate_instance(net).size(), 2u);
}

TEST(Validate, SingleQueueRanges) {
  EXPECT_TRUE(validate_instance(figure1_instance()).empty());
  EXPECT_FALSE(validate_instance(SingleQueueInstance{1.0, {0.5}}).empty());
  EXPECT_FALSE(validate_instance(SingleQueueInstance{0.3, {}}).empty());
}

TEST(Closure, CompletesMissingSubsetsAndKeepsOrder) {
  const auto set = complete_downward_closure({Schedule({0, 1, 2})});
  EXPECT_EQ(set.size(), 8u);
  EXPECT_EQ(set[0], Schedule({0, 1, 2}));
  EXPECT_EQ(set[1], Schedule{});
  auto net = make_network(3, ArrivalModel::independent(std::vector<double>{0.1, 0.1, 0.1}), {0.5, 0.5, 0.5},
                          set, {0, 1, 2});
  EXPECT_TRUE(validate_instance(net).empty());
}

TEST(StructureConstants, SingleQueueEmbedding) {
  const auto c = structure_constants(embed(figure1_instance()));
  EXPECT_EQ(c.m_arr, 1u);
  EXPECT_EQ(c.m_sigma, 1u);
}

TEST(StructureConstants, BipartiteMatchingTwoByTwo) {
  // Servers are edges (i, j) of K_{2,2}; queue i owns edges leaving i. A
  // matching uses each left and right vertex at most once.
  const std::vector<std::pair<int, int>> edges{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  std::vector<Schedule> matchings;
  for (unsigned mask = 0; mask < 16; ++mask) {
    int left = 0, right = 0;
    bool ok = true;
    std::vector<std::size_t> s;
    for (unsigned e = 0; e < 4; ++e) {
      if (!(mask & (1U << e))) continue;
      if ((left >> edges[e].first) & 1 || (right >> edges[e].second) & 1) ok = false;
      left |= 1 << edges[e].first;
      right |= 1 << edges[e].second;
      s.push_back(e);
    }
    if (ok) matchings.emplace_back(s);
  }
  EXPECT_EQ(matchings.size(), 7u);
  auto net = make_network(2, ArrivalModel::independent(std::vector<double>{0.3, 0.3}), {0.5, 0.5, 0.5, 0.5},
                          ScheduleSet(matchings), {0, 0, 1, 1});
  ASSERT_TRUE(validate_instance(net).empty());
  EXPECT_EQ(structure_constants(net).m_sigma, 2u);
  EXPECT_EQ(structure_constants(net).m_arr, 2u);
}

TEST(StructureConstants, TandemDependencyCount) {
  // Servers 0 and 1 have a single destination queue; the last server only
  // exits, and the exit queue counts as its destination.
  const auto net = tandem_instance(3, {0.8, 0.7, 0.6}, 0.4);
  EXPECT_EQ(structure_constants(net).m_dep, 3u);
  EXPECT_EQ(net.destinations[0], std::vector<std::size_t>{1});
  EXPECT_TRUE(net.destinations[2].empty());
}

TEST(EffectiveRate, ZeroScheduleGivesZeroVector) {
  const auto net = tandem_instance(2, {0.8, 0.6}, 0.5);
  std::vector<double> phi(net.schedules.size(), 0.0);
  phi[net.schedules.zero_index()] = 1.0;
  for (double r : effective_service_rate(net, phi)) EXPECT_EQ(r, 0.0);
}

TEST(EffectiveRate, SingleQueuePointMass) {
  const auto net = embed(figure1_instance());
  for (std::size_t k = 0; k < 5; ++k) {
    std::vector<double> phi(net.schedules.size(), 0.0);
    phi[net.schedules.index_of(Schedule({k}))] = 1.0;
    EXPECT_DOUBLE_EQ(effective_service_rate(net, phi)[0], figure1_instance().mu[k]);
  }
}

TEST(EffectiveRate, TandemBothServers) {
  const auto net = tandem_instance(2, {0.8, 0.6}, 0.5);
  std::vector<double> phi(net.schedules.size(), 0.0);
  phi[net.schedules.index_of(Schedule({0, 1}))] = 1.0;
  const auto r = effective_service_rate(net, phi);
  EXPECT_NEAR(r[0], 0.8, 1e-15);
  EXPECT_NEAR(r[1], -0.2, 1e-15);
}

TEST(EffectiveRate, RejectsNonDistributions) {
  const auto net = tandem_instance(2, {0.8, 0.6}, 0.5);
  std::vector<double> phi(net.schedules.size(), 0.0);
  phi[0] = 0.9;
  EXPECT_THROW(effective_service_rate(net, phi), DistributionError);
  EXPECT_THROW(effective_service_rate(net, std::vector<double>{1.0}), DistributionError);
}

TEST(EffectiveRate, Linear) {
  const auto net = random_with_slackness(3, 5, 0.1, 4, RandomKind::network);
  const std::size_t S = net.schedules.size();
  RandomSource rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(S), b(S);
    double sa = 0, sb = 0;
    for (std::size_t i = 0; i < S; ++i) {
      a[i] = rng.uniform(Stream::policy, trial, i);
      b[i] = rng.uniform(Stream::policy, trial + 100, i);
      sa += a[i];
      sb += b[i];
    }
    for (auto& x : a) x /= sa;
    for (auto& x : b) x /= sb;
    const double alpha = rng.uniform(Stream::policy, trial + 200, 0);
    std::vector<double> mix(S);
    for (std::size_t i = 0; i < S; ++i) mix[i] = alpha * a[i] + (1 - alpha) * b[i];
    const auto ra = effective_service_rate(net, a), rb = effective_service_rate(net, b),
               rm = effective_service_rate(net, mix);
    for (std::size_t n = 0; n < 3; ++n) EXPECT_NEAR(rm[n], alpha * ra[n] + (1 - alpha) * rb[n], 1e-12);
  }
}

TEST(Simplex, SolvesSmallProgram) {
  // max 3x + 2y  s.t. x + y <= 4, x + 3y <= 6, x <= 3
  const auto s = lp::maximize({{1, 1}, {1, 3}, {1, 0}}, {4, 6, 3}, {3, 2});
  ASSERT_EQ(s.status, lp::Status::optimal);
  EXPECT_NEAR(s.value, 11.0, 1e-12);
  EXPECT_NEAR(s.x[0], 3.0, 1e-12);
  EXPECT_NEAR(s.x[1], 1.0, 1e-12);
}

TEST(Simplex, NeedsPhaseOneForNegativeRightHandSide) {
  // max -x  s.t. -x <= -2 (x >= 2)
  const auto s = lp::maximize({{-1}}, {-2}, {-1});
  ASSERT_EQ(s.status, lp::Status::optimal);
  EXPECT_NEAR(s.value, -2.0, 1e-12);
}

TEST(Simplex, ReportsInfeasibleAndUnbounded) {
  EXPECT_EQ(lp::maximize({{1}, {-1}}, {1, -2}, {1}).status, lp::Status::infeasible);
  EXPECT_EQ(lp::maximize({{-1}}, {1}, {1}).status, lp::Status::unbounded);
}

TEST(Slackness, FigureOneInstance) {
  const auto r = traffic_slackness(embed(figure1_instance()));
  EXPECT_NEAR(r.epsilon, 0.10, 1e-9);
  EXPECT_NEAR(slackness_single(figure1_instance()), 0.10, 1e-12);
}

TEST(Slackness, NoArrivalsGivesNonNegativeMargin) {
  const auto net = two_queue_one_at_a_time(0.6, 0.4, 0.0, 0.0);
  const auto r = traffic_slackness(net);
  // sharing time between the two queues: eps = 0.6 * 0.4 / (0.6 + 0.4)
  EXPECT_NEAR(r.epsilon, 0.24, 1e-9);
  EXPECT_GE(r.epsilon, 0.0);
}

TEST(Slackness, TwoQueuesOneServerAtATime) {
  const auto net = two_queue_one_at_a_time(0.6, 0.6, 0.2, 0.2);
  const auto r = traffic_slackness(net);
  EXPECT_NEAR(r.epsilon, 0.1, 1e-9);
  EXPECT_NEAR(r.witness[net.schedules.index_of(Schedule({0}))], 0.5, 1e-9);
  EXPECT_NEAR(r.witness[net.schedules.index_of(Schedule({1}))], 0.5, 1e-9);
}

TEST(Slackness, SingleQueueFormula) {
  EXPECT_NEAR(slackness_single({0.5, {0.5}}), 0.0, 1e-15);
  EXPECT_NEAR(slackness_single({0.5, {0.4, 0.7}}), 0.2, 1e-12);
  EXPECT_NEAR(traffic_slackness(embed({0.5, {0.4, 0.7}})).epsilon, 0.2, 1e-9);
}

TEST(Slackness, EnumerationCap) {
  const auto net = tandem_instance(4, {0.9, 0.9, 0.9, 0.9}, 0.1);
  EXPECT_THROW(traffic_slackness(net, 8), EnumerationCapExceeded);
  EXPECT_NO_THROW(traffic_slackness(net, 16));
}

TEST(SlacknessProperty, AgreesWithSingleQueueFormula) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    RandomSource rng(seed);
    SingleQueueInstance s;
    const std::size_t K = 1 + seed % 7;
    for (std::size_t k = 0; k < K; ++k) s.mu.push_back(rng.uniform(Stream::policy, 0, k));
    s.lambda = 0.99 * rng.uniform(Stream::policy, 1, 0);
    EXPECT_NEAR(traffic_slackness(embed(s)).epsilon, slackness_single(s), 1e-9) << "seed " << seed;
  }
}

TEST(SlacknessProperty, WitnessIsFeasible) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto kind = seed % 2 ? RandomKind::network : RandomKind::multi;
    const auto net = random_with_slackness(2 + seed % 3, 4 + seed % 3, 0.05 + 0.01 * double(seed % 5), seed, kind);
    const auto r = traffic_slackness(net);
    double total = 0.0;
    for (double p : r.witness) {
      EXPECT_GE(p, 0.0);
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    const auto rate = effective_service_rate(net, r.witness);
    const auto lambda = net.lambda();
    for (std::size_t n = 0; n < net.queue_count; ++n) EXPECT_GE(rate[n], lambda[n] + r.epsilon - 1e-9);
  }
}

TEST(SlacknessProperty, MonotoneInServiceRates) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto net = random_with_slackness(3, 5, 0.1, seed, RandomKind::multi);
    double prev = traffic_slackness(net).epsilon;
    for (std::size_t k = 0; k < net.server_count; ++k) {
      net.mu[k] = std::min(1.0, net.mu[k] + 0.05);
      const double now = traffic_slackness(net).epsilon;
      EXPECT_GE(now, prev - 1e-12);
      prev = now;
    }
  }
}

TEST(SlacknessProperty, MatchesVertexEnumeration) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto kind = seed % 2 ? RandomKind::network : RandomKind::multi;
    const auto net = random_with_slackness(2 + seed % 2, 5, 0.1, 1000 + seed, kind);
    EXPECT_NEAR(traffic_slackness(net).epsilon, oracle::slackness_by_vertices(net), 1e-6);
  }
}

TEST(Json, RoundTripsEveryKind) {
  const auto single = single_document(figure1_instance());
  const auto again = parse_instance(to_json(single));
  ASSERT_TRUE(again.single);
  EXPECT_EQ(again.single->mu, figure1_instance().mu);
  EXPECT_EQ(again.single->lambda, 0.45);

  const auto net = random_with_slackness(3, 5, 0.1, 9, RandomKind::network);
  const auto back = parse_instance(to_json(net)).network;
  EXPECT_EQ(back.mu, net.mu);
  EXPECT_EQ(back.transitions, net.transitions);
  EXPECT_EQ(back.schedules.schedules(), net.schedules.schedules());
  EXPECT_EQ(back.arrivals.probabilities, net.arrivals.probabilities);
  EXPECT_EQ(back.server_queue, net.server_queue);
}

TEST(Json, ParsesEveryArrivalForm) {
  const char* text = R"({"kind":"multi","n":2,"k":2,"lambda":[0.2,0.3],"mu":[0.6,0.6],
    "schedules":[[0,0],[1,0],[0,1]],"server_queue":[0,1]})";
  const auto d = parse_instance_text(text);
  EXPECT_TRUE(d.violations().empty());
  EXPECT_NEAR(d.network.lambda()[1], 0.3, 1e-15);
  const char* explicit_law = R"({"kind":"network","n":1,"k":1,"lambda":{"support":[[1],[0]],"probs":[0.25,0.75]},
    "mu":[0.5],"schedules":[[0],[1]],"server_queue":[0],"transitions":[[0,1]]})";
  const auto e = parse_instance_text(explicit_law);
  EXPECT_TRUE(e.violations().empty());
  EXPECT_NEAR(e.network.lambda()[0], 0.25, 1e-15);
}

TEST(Json, RejectsMalformedInput) {
  EXPECT_THROW(parse_instance_text("{bad"), ParseError);
  EXPECT_THROW(parse_instance_text(R"({"kind":"single","mu":[0.5]})"), ParseError);
  EXPECT_THROW(parse_instance_text(R"({"kind":"weird"})"), ParseError);
  EXPECT_THROW(parse_instance_text(R"({"kind":"multi","n":1,"k":2,"lambda":0.1,"mu":[0.5,0.5],
    "schedules":[[0,2]],"server_queue":[0,0]})"),
               ParseError);
}

TEST(Json, MultiKindMustBeExitOnly) {
  const char* text = R"({"kind":"multi","n":2,"k":1,"lambda":[0.1,0.0],"mu":[0.5],
    "schedules":[[0],[1]],"server_queue":[0],"transitions":[[0,1,0]]})";
  EXPECT_FALSE(parse_instance_text(text).violations().empty());
}
