#pragma once

// Instance types for single-queue, multi-queue and network systems, their
// structural validation, and the structure constants used by the bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "clq/errors.hpp"

namespace clq {

/// Sentinel server index meaning "no server selected" (the null server).
inline constexpr std::size_t kNoServer = std::numeric_limits<std::size_t>::max();

inline constexpr double kStochasticTolerance = 1e-12;
inline constexpr double kDistributionTolerance = 1e-9;

struct SingleQueueInstance {
  double lambda = 0.0;
  std::vector<double> mu;

  std::size_t server_count() const { return mu.size(); }

  double best_rate() const {
    return mu.empty() ? 0.0 : *std::max_element(mu.begin(), mu.end());
  }

  /// Lowest-index server attaining the best rate.
  std::size_t best_server() const {
    return mu.empty() ? kNoServer
                      : static_cast<std::size_t>(std::max_element(mu.begin(), mu.end()) - mu.begin());
  }

  bool stabilizable() const { return best_rate() > lambda; }
};

/// Returns max_k mu_k - lambda.
inline double slackness_single(const SingleQueueInstance& instance) {
  return instance.best_rate() - instance.lambda;
}

/// A set of selected servers, kept sorted and duplicate-free.
class Schedule {
 public:
  Schedule() = default;
  explicit Schedule(std::vector<std::size_t> servers) : servers_(std::move(servers)) {
    std::sort(servers_.begin(), servers_.end());
    servers_.erase(std::unique(servers_.begin(), servers_.end()), servers_.end());
  }

  static Schedule from_indicator(std::span<const int> indicator) {
    std::vector<std::size_t> servers;
    for (std::size_t k = 0; k < indicator.size(); ++k) {
      if (indicator[k] != 0) servers.push_back(k);
    }
    return Schedule(std::move(servers));
  }

  std::vector<int> to_indicator(std::size_t server_count) const {
    std::vector<int> out(server_count, 0);
    for (auto k : servers_) {
      if (k < server_count) out[k] = 1;
    }
    return out;
  }

  const std::vector<std::size_t>& servers() const { return servers_; }
  std::size_t size() const { return servers_.size(); }
  bool empty() const { return servers_.empty(); }
  bool selects(std::size_t k) const { return std::binary_search(servers_.begin(), servers_.end(), k); }

  friend bool operator==(const Schedule&, const Schedule&) = default;
  friend auto operator<=>(const Schedule&, const Schedule&) = default;

 private:
  std::vector<std::size_t> servers_;
};

/// The feasible schedule set in a fixed stored order. The stored order is the
/// tie-break order of every argmax over schedules.
class ScheduleSet {
 public:
  ScheduleSet() = default;
  explicit ScheduleSet(std::vector<Schedule> schedules) : schedules_(std::move(schedules)) {
    for (std::size_t i = 0; i < schedules_.size(); ++i) index_.emplace(schedules_[i], i);
  }

  std::size_t size() const { return schedules_.size(); }
  const Schedule& operator[](std::size_t i) const { return schedules_[i]; }
  auto begin() const { return schedules_.begin(); }
  auto end() const { return schedules_.end(); }
  const std::vector<Schedule>& schedules() const { return schedules_; }

  /// Index of the schedule, or kNoServer when absent.
  std::size_t index_of(const Schedule& s) const {
    auto it = index_.find(s);
    return it == index_.end() ? kNoServer : it->second;
  }
  bool contains(const Schedule& s) const { return index_.count(s) != 0; }

  /// Index of the all-zero schedule, or kNoServer.
  std::size_t zero_index() const { return index_of(Schedule{}); }

  std::size_t max_selected() const {
    std::size_t m = 0;
    for (const auto& s : schedules_) m = std::max(m, s.size());
    return m;
  }

 private:
  std::vector<Schedule> schedules_;
  std::map<Schedule, std::size_t> index_;
};

/// Returns the input followed by every missing subset, so the result is
/// downward-closed. Input order is preserved and missing subsets are appended
/// in order of size, then lexicographically.
inline ScheduleSet complete_downward_closure(const std::vector<Schedule>& schedules) {
  std::set<Schedule> present(schedules.begin(), schedules.end());
  std::set<Schedule> missing;
  for (const auto& s : schedules) {
    const auto& servers = s.servers();
    if (servers.size() >= 63) throw ParameterError("schedule too large to close by enumeration");
    const std::uint64_t subsets = std::uint64_t{1} << servers.size();
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
      std::vector<std::size_t> pick;
      for (std::size_t i = 0; i < servers.size(); ++i) {
        if (mask & (std::uint64_t{1} << i)) pick.push_back(servers[i]);
      }
      Schedule sub(std::move(pick));
      if (!present.count(sub)) missing.insert(std::move(sub));
    }
  }
  std::vector<Schedule> ordered;
  std::set<Schedule> seen;
  for (const auto& s : schedules) {
    if (seen.insert(s).second) ordered.push_back(s);
  }
  std::vector<Schedule> extra(missing.begin(), missing.end());
  std::stable_sort(extra.begin(), extra.end(),
                   [](const Schedule& a, const Schedule& b) { return a.size() < b.size(); });
  ordered.insert(ordered.end(), extra.begin(), extra.end());
  return ScheduleSet(std::move(ordered));
}

/// Joint arrival law: a finite support of 0/1 vectors with probabilities.
struct ArrivalModel {
  std::vector<std::vector<std::uint8_t>> support;
  std::vector<double> probabilities;

  std::vector<double> mean(std::size_t queue_count) const {
    std::vector<double> lambda(queue_count, 0.0);
    for (std::size_t i = 0; i < support.size() && i < probabilities.size(); ++i) {
      for (std::size_t n = 0; n < queue_count && n < support[i].size(); ++n) {
        lambda[n] += probabilities[i] * support[i][n];
      }
    }
    return lambda;
  }

  /// Inverse-CDF draw over the stored support order.
  std::size_t sample(double u) const {
    double cumulative = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
      cumulative += probabilities[i];
      if (u < cumulative) return i;
    }
    // Rounding can leave the total a hair below 1; fall back to the last
    // entry with positive mass.
    for (std::size_t i = probabilities.size(); i-- > 0;) {
      if (probabilities[i] > 0.0) return i;
    }
    return 0;
  }

  /// Independent Bernoulli arrivals per queue, support enumerated in binary
  /// order with queue 0 as the lowest bit.
  static ArrivalModel independent(std::span<const double> rates) {
    ArrivalModel model;
    const std::size_t n = rates.size();
    if (n >= 20) throw ParameterError("too many queues for an enumerated arrival support");
    const std::size_t count = std::size_t{1} << n;
    for (std::size_t mask = 0; mask < count; ++mask) {
      std::vector<std::uint8_t> a(n, 0);
      double p = 1.0;
      for (std::size_t q = 0; q < n; ++q) {
        a[q] = (mask >> q) & 1U;
        p *= a[q] ? rates[q] : 1.0 - rates[q];
      }
      model.support.push_back(std::move(a));
      model.probabilities.push_back(p);
    }
    return model;
  }

  /// Bernoulli(rate) arrivals into one queue of `queue_count`.
  static ArrivalModel single_stream(std::size_t queue_count, std::size_t queue, double rate) {
    ArrivalModel model;
    std::vector<std::uint8_t> hit(queue_count, 0);
    hit[queue] = 1;
    model.support = {hit, std::vector<std::uint8_t>(queue_count, 0)};
    model.probabilities = {rate, 1.0 - rate};
    return model;
  }
};

/// Queueing network. Transition column `queue_count` is the exit queue.
struct NetworkInstance {
  std::size_t queue_count = 0;
  std::size_t server_count = 0;
  ArrivalModel arrivals;
  std::vector<double> mu;
  ScheduleSet schedules;
  std::vector<std::size_t> server_queue;
  std::vector<std::vector<double>> transitions;
  std::vector<std::vector<std::size_t>> destinations;

  std::size_t exit_column() const { return queue_count; }

  std::vector<double> lambda() const { return arrivals.mean(queue_count); }

  bool exit_only() const {
    for (const auto& row : transitions) {
      if (row.size() != queue_count + 1 || row[queue_count] != 1.0) return false;
    }
    return true;
  }

  /// r_{k,n} = mu_k p_{k,n} over real queues.
  double transition_rate(std::size_t k, std::size_t n) const { return mu[k] * transitions[k][n]; }
};

inline std::vector<std::vector<std::size_t>> derive_destinations(
    std::size_t queue_count, const std::vector<std::vector<double>>& transitions) {
  std::vector<std::vector<std::size_t>> out(transitions.size());
  for (std::size_t k = 0; k < transitions.size(); ++k) {
    for (std::size_t n = 0; n < queue_count && n < transitions[k].size(); ++n) {
      if (transitions[k][n] > 0.0) out[k].push_back(n);
    }
  }
  return out;
}

/// Exit-only transition matrix (all mass on the exit column).
inline std::vector<std::vector<double>> exit_only_transitions(std::size_t server_count,
                                                              std::size_t queue_count) {
  std::vector<std::vector<double>> p(server_count, std::vector<double>(queue_count + 1, 0.0));
  for (auto& row : p) row[queue_count] = 1.0;
  return p;
}

/// Builds a network and derives its destination sets. An empty transition
/// matrix means exit-only.
inline NetworkInstance make_network(std::size_t queue_count, ArrivalModel arrivals, std::vector<double> mu,
                                    ScheduleSet schedules, std::vector<std::size_t> server_queue,
                                    std::vector<std::vector<double>> transitions = {}) {
  NetworkInstance net;
  net.queue_count = queue_count;
  net.server_count = mu.size();
  net.arrivals = std::move(arrivals);
  net.mu = std::move(mu);
  net.schedules = std::move(schedules);
  net.server_queue = std::move(server_queue);
  net.transitions = transitions.empty() ? exit_only_transitions(net.server_count, queue_count)
                                        : std::move(transitions);
  net.destinations = derive_destinations(queue_count, net.transitions);
  return net;
}

/// The zero schedule followed by every singleton, in server order.
inline ScheduleSet singleton_schedules(std::size_t server_count) {
  std::vector<Schedule> s{Schedule{}};
  for (std::size_t k = 0; k < server_count; ++k) s.emplace_back(std::vector<std::size_t>{k});
  return ScheduleSet(std::move(s));
}

/// Single queue as a one-queue exit-only network. Schedule k+1 selects server k.
inline NetworkInstance embed(const SingleQueueInstance& single) {
  const std::size_t k = single.server_count();
  return make_network(1, ArrivalModel::single_stream(1, 0, single.lambda), single.mu,
                      singleton_schedules(k), std::vector<std::size_t>(k, 0));
}

namespace detail {

inline std::string describe(std::span<const std::uint8_t> v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(int(v[i]));
  return s + ")";
}

inline std::string describe(const Schedule& sch) {
  std::string s = "{";
  for (std::size_t i = 0; i < sch.servers().size(); ++i) {
    s += (i ? "," : "") + std::to_string(sch.servers()[i]);
  }
  return s + "}";
}

inline std::string num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace detail

/// Every violated structural invariant, in a fixed order. Empty means valid.
inline std::vector<std::string> validate_instance(const NetworkInstance& inst) {
  std::vector<std::string> v;
  const std::size_t N = inst.queue_count;
  const std::size_t K = inst.server_count;
  if (N == 0) v.push_back("queue count must be positive");
  if (K == 0) v.push_back("server count must be positive");

  if (inst.mu.size() != K) {
    v.push_back("mu has " + std::to_string(inst.mu.size()) + " entries, expected " + std::to_string(K));
  }
  for (std::size_t k = 0; k < inst.mu.size(); ++k) {
    if (!(inst.mu[k] >= 0.0 && inst.mu[k] <= 1.0)) {
      v.push_back("mu[" + std::to_string(k) + "] = " + detail::num(inst.mu[k]) + " outside [0,1]");
    }
  }

  const auto& arr = inst.arrivals;
  if (arr.support.empty()) v.push_back("arrival support is empty");
  if (arr.support.size() != arr.probabilities.size()) {
    v.push_back("arrival support has " + std::to_string(arr.support.size()) + " vectors but " +
                std::to_string(arr.probabilities.size()) + " probabilities");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < arr.probabilities.size(); ++i) {
    const double p = arr.probabilities[i];
    if (!(p >= 0.0 && p <= 1.0)) {
      v.push_back("arrival probability " + std::to_string(i) + " = " + detail::num(p) + " outside [0,1]");
    }
    total += p;
  }
  if (!arr.probabilities.empty() && std::abs(total - 1.0) > kStochasticTolerance) {
    v.push_back("arrival probabilities sum to " + detail::num(total) + ", expected 1");
  }
  std::set<std::vector<std::uint8_t>> seen_support;
  for (std::size_t i = 0; i < arr.support.size(); ++i) {
    const auto& a = arr.support[i];
    if (a.size() != N) {
      v.push_back("arrival vector " + std::to_string(i) + " has length " + std::to_string(a.size()) +
                  ", expected " + std::to_string(N));
    }
    if (std::any_of(a.begin(), a.end(), [](std::uint8_t x) { return x > 1; })) {
      v.push_back("arrival vector " + std::to_string(i) + " is not binary");
    }
    if (!seen_support.insert(a).second) {
      v.push_back("arrival vector " + std::to_string(i) + " " + detail::describe(a) + " is duplicated");
    }
  }

  if (!inst.schedules.contains(Schedule{})) v.push_back("schedule set lacks the all-zero schedule");
  std::set<Schedule> seen_schedules;
  for (std::size_t i = 0; i < inst.schedules.size(); ++i) {
    const auto& s = inst.schedules[i];
    if (!seen_schedules.insert(s).second) {
      v.push_back("schedule " + std::to_string(i) + " " + detail::describe(s) + " is duplicated");
    }
    for (auto k : s.servers()) {
      if (k >= K) v.push_back("schedule " + std::to_string(i) + " selects unknown server " + std::to_string(k));
    }
    // Closure under removing one server implies closure under all subsets.
    for (std::size_t drop = 0; drop < s.size(); ++drop) {
      std::vector<std::size_t> sub = s.servers();
      sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(drop));
      Schedule child(std::move(sub));
      if (!inst.schedules.contains(child)) {
        v.push_back("schedule set is not downward-closed: " + detail::describe(s) + " present but " +
                    detail::describe(child) + " missing");
      }
    }
  }

  if (inst.server_queue.size() != K) {
    v.push_back("server_queue has " + std::to_string(inst.server_queue.size()) + " entries, expected " +
                std::to_string(K));
  }
  for (std::size_t k = 0; k < inst.server_queue.size(); ++k) {
    if (inst.server_queue[k] >= N) {
      v.push_back("server " + std::to_string(k) + " belongs to unknown queue " +
                  std::to_string(inst.server_queue[k]));
    }
  }

  if (inst.transitions.size() != K) {
    v.push_back("transitions has " + std::to_string(inst.transitions.size()) + " rows, expected " +
                std::to_string(K));
  }
  for (std::size_t k = 0; k < inst.transitions.size(); ++k) {
    const auto& row = inst.transitions[k];
    if (row.size() != N + 1) {
      v.push_back("transitions row " + std::to_string(k) + " has " + std::to_string(row.size()) +
                  " columns, expected " + std::to_string(N + 1));
      continue;
    }
    double sum = 0.0;
    for (std::size_t n = 0; n <= N; ++n) {
      if (!(row[n] >= 0.0 && row[n] <= 1.0)) {
        v.push_back("transitions[" + std::to_string(k) + "][" + std::to_string(n) + "] = " +
                    detail::num(row[n]) + " outside [0,1]");
      }
      sum += row[n];
    }
    if (std::abs(sum - 1.0) > kStochasticTolerance) {
      v.push_back("transitions row " + std::to_string(k) + " sums to " + detail::num(sum) + ", expected 1");
    }
  }

  if (inst.destinations != derive_destinations(N, inst.transitions)) {
    v.push_back("destinations do not match the positive entries of the transition matrix");
  }
  return v;
}

inline std::vector<std::string> validate_instance(const SingleQueueInstance& inst) {
  std::vector<std::string> v;
  if (inst.mu.empty()) v.push_back("server count must be positive");
  if (!(inst.lambda >= 0.0 && inst.lambda < 1.0)) {
    v.push_back("lambda = " + detail::num(inst.lambda) + " outside [0,1)");
  }
  for (std::size_t k = 0; k < inst.mu.size(); ++k) {
    if (!(inst.mu[k] >= 0.0 && inst.mu[k] <= 1.0)) {
      v.push_back("mu[" + std::to_string(k) + "] = " + detail::num(inst.mu[k]) + " outside [0,1]");
    }
  }
  return v;
}

struct StructureConstants {
  std::size_t m_arr = 0;
  std::size_t m_sigma = 0;
  std::size_t m_dep = 0;
};

/// Exact maxima over the listed arrival support and schedule set. M_D counts
/// the exit queue as a destination when a server can route jobs out.
inline StructureConstants structure_constants(const NetworkInstance& inst) {
  StructureConstants c;
  for (const auto& a : inst.arrivals.support) {
    c.m_arr = std::max<std::size_t>(c.m_arr, std::accumulate(a.begin(), a.end(), std::size_t{0}));
  }
  c.m_sigma = inst.schedules.max_selected();
  for (std::size_t k = 0; k < inst.server_count; ++k) {
    std::size_t d = inst.destinations[k].size();
    if (inst.transitions[k][inst.queue_count] > 0.0) ++d;
    c.m_dep += d * d;
  }
  return c;
}

/// Column of the capacity-region map for one schedule: the effective service
/// rate each queue gets from it (own service minus inflow).
inline std::vector<double> schedule_service_vector(const NetworkInstance& inst, const Schedule& s) {
  std::vector<double> rate(inst.queue_count, 0.0);
  for (auto k : s.servers()) {
    rate[inst.server_queue[k]] += inst.mu[k];
    for (std::size_t n = 0; n < inst.queue_count; ++n) rate[n] -= inst.mu[k] * inst.transitions[k][n];
  }
  return rate;
}

/// mu^net(phi), linear in phi.
inline std::vector<double> effective_service_rate(const NetworkInstance& inst, std::span<const double> phi) {
  if (phi.size() != inst.schedules.size()) {
    throw DistributionError("phi has " + std::to_string(phi.size()) + " entries for " +
                            std::to_string(inst.schedules.size()) + " schedules");
  }
  double total = 0.0;
  for (double p : phi) {
    if (p < -kDistributionTolerance) throw DistributionError("phi has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kDistributionTolerance) {
    throw DistributionError("phi sums to " + detail::num(total) + ", expected 1");
  }
  std::vector<double> rate(inst.queue_count, 0.0);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (phi[i] == 0.0) continue;
    const auto col = schedule_service_vector(inst, inst.schedules[i]);
    for (std::size_t n = 0; n < rate.size(); ++n) rate[n] += phi[i] * col[n];
  }
  return rate;
}

}  // namespace clq
