#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "clq/errors.hpp"
#include "clq/model.hpp"
#include "clq/random.hpp"
#include "clq/slackness.hpp"

namespace clq {

/// K = 5, lambda = 0.45, mu = (0.045, 0.35, 0.35, 0.35, 0.55); eps = 0.1.
inline SingleQueueInstance figure1_instance() { return SingleQueueInstance{0.45, {0.045, 0.35, 0.35, 0.35, 0.55}}; }

struct LowerBoundFamily {
  std::vector<SingleQueueInstance> members;  // member k: server k at 1/2 + eps, others at 1/2 - eps
  SingleQueueInstance uniform;               // every server at 1/2 - eps
};

inline LowerBoundFamily lower_bound_family(std::size_t server_count, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 0.25)) throw ParameterError("lower-bound family needs eps in (0, 0.25]");
  if (server_count == 0) throw ParameterError("lower-bound family needs K >= 1");
  LowerBoundFamily f;
  f.uniform = SingleQueueInstance{0.5, std::vector<double>(server_count, 0.5 - epsilon)};
  for (std::size_t k = 0; k < server_count; ++k) {
    SingleQueueInstance m = f.uniform;
    m.mu[k] = 0.5 + epsilon;
    f.members.push_back(std::move(m));
  }
  return f;
}

/// Line network: server n serves queue n and forwards to n+1; the last server
/// sends jobs out. Every subset of servers is a schedule (stored by bitmask).
inline NetworkInstance tandem_instance(std::size_t queue_count, const std::vector<double>& mu, double lambda0) {
  if (queue_count == 0 || mu.size() != queue_count) throw ParameterError("tandem needs one rate per queue");
  if (queue_count > 12) throw ParameterError("tandem schedule set would exceed the enumeration cap");
  std::vector<Schedule> schedules;
  for (std::size_t mask = 0; mask < (std::size_t{1} << queue_count); ++mask) {
    std::vector<std::size_t> servers;
    for (std::size_t k = 0; k < queue_count; ++k) {
      if (mask & (std::size_t{1} << k)) servers.push_back(k);
    }
    schedules.emplace_back(std::move(servers));
  }
  std::vector<std::vector<double>> p(queue_count, std::vector<double>(queue_count + 1, 0.0));
  for (std::size_t k = 0; k + 1 < queue_count; ++k) p[k][k + 1] = 1.0;
  p[queue_count - 1][queue_count] = 1.0;
  std::vector<std::size_t> owner(queue_count);
  for (std::size_t k = 0; k < queue_count; ++k) owner[k] = k;
  return make_network(queue_count, ArrivalModel::single_stream(queue_count, 0, lambda0), mu,
                      ScheduleSet(std::move(schedules)), std::move(owner), std::move(p));
}

enum class RandomKind { single, multi, network };

inline RandomKind parse_random_kind(std::string_view s) {
  if (s == "single") return RandomKind::single;
  if (s == "multi") return RandomKind::multi;
  if (s == "network") return RandomKind::network;
  throw ParseError("unknown instance kind '" + std::string(s) + "'");
}

namespace detail {

/// Sequential draws from the counter-based source.
class DrawSequence {
 public:
  DrawSequence(std::uint64_t seed, std::uint64_t attempt) : rng_(seed), attempt_(attempt) {}
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * rng_.uniform(Stream::policy, attempt_, counter_++);
  }
  std::size_t index(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(uniform() * double(n))); }

 private:
  RandomSource rng_;
  std::uint64_t attempt_;
  std::uint64_t counter_ = 0;
};

inline NetworkInstance with_arrival_rates(NetworkInstance inst, const std::vector<double>& rates) {
  inst.arrivals = ArrivalModel::independent(rates);
  return inst;
}

}  // namespace detail

/// Random instance whose traffic slackness equals `epsilon`. Structure and
/// service rates are drawn first; arrival rates are a random direction scaled
/// until the LP returns the target. Deterministic in (parameters, seed).
inline NetworkInstance random_with_slackness(std::size_t queue_count, std::size_t server_count, double epsilon,
                                             std::uint64_t seed, RandomKind kind) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ParameterError("target eps must lie in (0, 1]");
  if (server_count == 0 || queue_count == 0) throw ParameterError("need at least one queue and one server");
  if (kind == RandomKind::single && queue_count != 1) throw ParameterError("single kind needs N = 1");
  if (kind != RandomKind::single && server_count < queue_count) {
    throw ParameterError("need at least one server per queue");
  }
  if (queue_count > 8) throw ParameterError("random generator supports at most 8 queues");

  constexpr int kAttempts = 100;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    detail::DrawSequence draw(seed, static_cast<std::uint64_t>(attempt));

    if (kind == RandomKind::single) {
      SingleQueueInstance single;
      for (std::size_t k = 0; k < server_count; ++k) single.mu.push_back(draw.uniform(0.05, 1.0));
      single.lambda = single.best_rate() - epsilon;
      if (single.lambda < 0.0 || single.lambda >= 1.0) continue;
      return embed(single);
    }

    std::vector<std::size_t> owner(server_count);
    for (std::size_t k = 0; k < server_count; ++k) owner[k] = k < queue_count ? k : draw.index(queue_count);

    const std::size_t maximal = 1 + draw.index(3);
    std::vector<Schedule> seeds;
    std::vector<bool> covered(server_count, false);
    for (std::size_t m = 0; m < maximal; ++m) {
      const std::size_t size = 1 + draw.index(std::min<std::size_t>(server_count, 4));
      std::vector<std::size_t> pool(server_count);
      for (std::size_t k = 0; k < server_count; ++k) pool[k] = k;
      std::vector<std::size_t> pick;
      for (std::size_t i = 0; i < size; ++i) {
        const std::size_t j = i + draw.index(server_count - i);
        std::swap(pool[i], pool[j]);
        pick.push_back(pool[i]);
        covered[pool[i]] = true;
      }
      seeds.emplace_back(std::move(pick));
    }
    for (std::size_t k = 0; k < server_count; ++k) {
      if (!covered[k]) seeds.emplace_back(std::vector<std::size_t>{k});
    }
    std::vector<Schedule> ordered{Schedule{}};
    ordered.insert(ordered.end(), seeds.begin(), seeds.end());
    ScheduleSet schedules = complete_downward_closure(ordered);
    if (schedules.size() > 64) continue;

    std::vector<double> mu(server_count);
    for (auto& m : mu) m = draw.uniform(0.2, 0.95);

    std::vector<std::vector<double>> p = exit_only_transitions(server_count, queue_count);
    if (kind == RandomKind::network) {
      for (std::size_t k = 0; k < server_count; ++k) {
        const std::size_t home = owner[k];
        if (draw.uniform() < 0.5 || home + 1 >= queue_count) continue;
        const std::size_t dest = home + 1 + draw.index(queue_count - home - 1);
        const double move = draw.uniform(0.2, 0.6);
        p[k][dest] = move;
        p[k][queue_count] = 1.0 - move;
      }
    }

    std::vector<double> direction(queue_count);
    for (auto& d : direction) d = draw.uniform(0.2, 1.0);
    NetworkInstance base =
        make_network(queue_count, ArrivalModel{}, mu, std::move(schedules), owner, std::move(p));

    auto slack_at = [&](double scale) {
      std::vector<double> rates(queue_count);
      for (std::size_t n = 0; n < queue_count; ++n) rates[n] = scale * direction[n];
      return traffic_slackness(detail::with_arrival_rates(base, rates)).epsilon;
    };
    const double max_dir = *std::max_element(direction.begin(), direction.end());
    double lo = 0.0, hi = 1.0 / max_dir;
    if (slack_at(lo) < epsilon || slack_at(hi) > epsilon) continue;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (slack_at(mid) >= epsilon ? lo : hi) = mid;
    }
    std::vector<double> rates(queue_count);
    for (std::size_t n = 0; n < queue_count; ++n) rates[n] = lo * direction[n];
    NetworkInstance out = detail::with_arrival_rates(std::move(base), rates);
    if (std::abs(traffic_slackness(out).epsilon - epsilon) > 1e-6) continue;
    if (!validate_instance(out).empty()) continue;
    return out;
  }
  throw GenerationFailed("could not hit the requested slackness after 100 attempts");
}

}  // namespace clq
