#pragma once

// Learning schedulers (UCB, MaxWeight-UCB, BackPressure-UCB) and the
// full-information oracles they are compared against, behind one interface
// the engine drives.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clq/errors.hpp"
#include "clq/model.hpp"
#include "clq/trace.hpp"

namespace clq {

/// min(1, mu_hat + sqrt(2 ln t / count)); 1 for an unsampled server.
inline double ucb_index(double mu_hat, std::uint64_t count, std::size_t t) {
  if (count == 0) return 1.0;
  return std::min(1.0, mu_hat + std::sqrt(2.0 * std::log(static_cast<double>(t)) / static_cast<double>(count)));
}

/// max(0, r_hat - sqrt(2 ln t / count)); 0 for an unsampled server.
inline double lcb_transition(double r_hat, std::uint64_t count, std::size_t t) {
  if (count == 0) return 0.0;
  return std::max(0.0, r_hat - std::sqrt(2.0 * std::log(static_cast<double>(t)) / static_cast<double>(count)));
}

/// Sample statistics of a learning policy. Sums are kept as integers so the
/// means are exact ratios of observed counts.
class PolicyState {
 public:
  PolicyState() = default;
  PolicyState(std::size_t server_count, std::size_t queue_count)
      : servers_(server_count), queues_(queue_count), count_(server_count, 0), successes_(server_count, 0),
        moves_(server_count * queue_count, 0) {}

  std::size_t server_count() const { return servers_; }
  std::size_t queue_count() const { return queues_; }

  std::size_t t = 1;

  std::uint64_t count(std::size_t k) const { return count_[k]; }
  std::uint64_t successes(std::size_t k) const { return successes_[k]; }
  std::uint64_t moves(std::size_t k, std::size_t n) const { return moves_[k * queues_ + n]; }

  double mu_hat(std::size_t k) const {
    return count_[k] == 0 ? 0.0 : static_cast<double>(successes_[k]) / static_cast<double>(count_[k]);
  }
  double r_hat(std::size_t k, std::size_t n) const {
    return count_[k] == 0 ? 0.0 : static_cast<double>(moves(k, n)) / static_cast<double>(count_[k]);
  }
  double mu_bar(std::size_t k) const { return ucb_index(mu_hat(k), count_[k], t); }
  double r_lower(std::size_t k, std::size_t n) const { return lcb_transition(r_hat(k, n), count_[k], t); }

  std::vector<double> mu_bar_all() const {
    std::vector<double> out(servers_);
    for (std::size_t k = 0; k < servers_; ++k) out[k] = mu_bar(k);
    return out;
  }
  std::vector<double> r_lower_all() const {
    std::vector<double> out(servers_ * queues_);
    for (std::size_t k = 0; k < servers_; ++k) {
      for (std::size_t n = 0; n < queues_; ++n) out[k * queues_ + n] = r_lower(k, n);
    }
    return out;
  }

  /// In-place update for outcomes of selected servers. Every event server
  /// must be selected by `schedule`.
  void record(const Schedule& schedule, std::span<const ServiceEvent> outcomes) {
    for (const auto& e : outcomes) {
      if (!schedule.selects(e.server)) {
        throw ObservationMismatch("outcome supplied for unselected server " + std::to_string(e.server));
      }
      if (e.server >= servers_) throw ObservationMismatch("outcome for unknown server " + std::to_string(e.server));
    }
    for (const auto& e : outcomes) {
      ++count_[e.server];
      if (e.success) {
        ++successes_[e.server];
        if (e.target < queues_) ++moves_[e.server * queues_ + e.target];
      }
    }
  }

  EstimatorSnapshot snapshot() const {
    EstimatorSnapshot s;
    s.t = t;
    s.count = count_;
    for (std::size_t k = 0; k < servers_; ++k) s.mu_hat.push_back(mu_hat(k));
    for (std::size_t k = 0; k < servers_; ++k) {
      for (std::size_t n = 0; n < queues_; ++n) s.r_hat.push_back(r_hat(k, n));
    }
    return s;
  }

 private:
  std::size_t servers_ = 0;
  std::size_t queues_ = 0;
  std::vector<std::uint64_t> count_;
  std::vector<std::uint64_t> successes_;
  std::vector<std::uint64_t> moves_;
};

/// Pure form of PolicyState::record.
inline PolicyState observe(PolicyState state, const Schedule& schedule, std::span<const ServiceEvent> outcomes) {
  state.record(schedule, outcomes);
  return state;
}

/// Algorithm 1 selection: kNoServer on an empty queue, else the lowest-index
/// server maximizing the UCB index.
inline std::size_t ucb_select(const PolicyState& state, std::int64_t q) {
  if (q <= 0) return kNoServer;
  std::size_t best = 0;
  double best_index = -1.0;
  for (std::size_t k = 0; k < state.server_count(); ++k) {
    const double idx = state.mu_bar(k);
    if (idx > best_index) {
      best_index = idx;
      best = k;
    }
  }
  return best;
}

/// Indices into `schedules` feasible for queue vector q, in stored order.
inline std::vector<std::size_t> feasible_schedules(const ScheduleSet& schedules,
                                                   std::span<const std::size_t> server_queue,
                                                   std::span<const std::int64_t> q) {
  std::vector<std::size_t> out;
  std::vector<std::int64_t> used(q.size(), 0);
  for (std::size_t i = 0; i < schedules.size(); ++i) {
    std::fill(used.begin(), used.end(), 0);
    bool ok = true;
    for (auto k : schedules[i].servers()) {
      const std::size_t n = server_queue[k];
      if (++used[n] > q[n]) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(i);
  }
  return out;
}

/// Sum over selected servers of Q_{queue(k)} * rate_k minus the optional
/// transition penalty sum_n Q_n r_{k,n} (row-major K x N), in server order.
inline double schedule_score(const Schedule& s, std::span<const std::int64_t> q, std::span<const double> rates,
                             std::span<const std::size_t> server_queue, std::span<const double> penalty = {}) {
  const std::size_t N = q.size();
  double w = 0.0;
  for (auto k : s.servers()) {
    double term = static_cast<double>(q[server_queue[k]]) * rates[k];
    if (!penalty.empty()) {
      double out = 0.0;
      for (std::size_t n = 0; n < N; ++n) out += static_cast<double>(q[n]) * penalty[k * N + n];
      term -= out;
    }
    w += term;
  }
  return w;
}

namespace detail {

inline std::size_t argmax_schedule(const ScheduleSet& schedules, std::span<const std::size_t> server_queue,
                                   std::span<const std::int64_t> q, std::span<const double> rates,
                                   std::span<const double> penalty) {
  std::size_t best = kNoServer;
  double best_w = 0.0;
  for (auto i : feasible_schedules(schedules, server_queue, q)) {
    const double w = schedule_score(schedules[i], q, rates, server_queue, penalty);
    if (best == kNoServer || w > best_w) {
      best = i;
      best_w = w;
    }
  }
  if (best == kNoServer) throw InvalidInstance("no feasible schedule (missing the all-zero schedule?)");
  return best;
}

}  // namespace detail

/// MaxWeight over the feasible subset; first-encountered schedule wins ties.
/// Returns an index into `schedules`.
inline std::size_t maxweight_select(std::span<const std::int64_t> q, std::span<const double> rates,
                                    const ScheduleSet& schedules, std::span<const std::size_t> server_queue) {
  return detail::argmax_schedule(schedules, server_queue, q, rates, {});
}

/// BackPressure over the feasible subset with transition lower bounds
/// r_lower (row-major K x N).
inline std::size_t backpressure_select(std::span<const std::int64_t> q, std::span<const double> mu_bar,
                                       std::span<const double> r_lower, const ScheduleSet& schedules,
                                       std::span<const std::size_t> server_queue) {
  return detail::argmax_schedule(schedules, server_queue, q, mu_bar, r_lower);
}

/// What a scheduler is allowed to know up front.
struct SystemStructure {
  std::size_t queue_count = 1;
  std::size_t server_count = 0;
  const ScheduleSet* schedules = nullptr;  // null for single-queue runs
  std::span<const std::size_t> server_queue;
};

/// Scheduler interface. The engine calls reset() once per run, then for each
/// period select_*() followed by observe() with the revealed outcomes.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string name() const = 0;
  virtual void reset(const SystemStructure& structure) = 0;

  /// Single queue: a server index or kNoServer.
  virtual std::size_t select_server(std::size_t t, std::int64_t q) = 0;

  /// Network: an index into the schedule set; `feasible` lists the allowed
  /// indices in stored order.
  virtual std::size_t select_schedule(std::size_t t, std::span<const std::int64_t> q,
                                      std::span<const std::size_t> feasible) = 0;

  virtual void observe(const Schedule& schedule, std::span<const ServiceEvent> outcomes,
                       std::span<const std::uint8_t> arrivals) {
    (void)schedule;
    (void)outcomes;
    (void)arrivals;
  }

  /// Learning state, when the policy has one.
  virtual const PolicyState* state() const { return nullptr; }
};

using PolicyHandle = std::unique_ptr<Policy>;

/// Shared plumbing for the three UCB-family learners.
class LearningPolicy : public Policy {
 public:
  void reset(const SystemStructure& structure) override {
    structure_ = structure;
    state_ = PolicyState(structure.server_count, structure.queue_count);
  }
  std::size_t select_server(std::size_t t, std::int64_t q) override {
    state_.t = t;
    return ucb_select(state_, q);
  }
  void observe(const Schedule& schedule, std::span<const ServiceEvent> outcomes,
               std::span<const std::uint8_t>) override {
    state_.record(schedule, outcomes);
  }
  const PolicyState* state() const override { return &state_; }

 protected:
  SystemStructure structure_;
  PolicyState state_;
};

class UcbPolicy final : public LearningPolicy {
 public:
  std::string name() const override { return "ucb"; }
  // On a network the single-queue rule generalizes to MaxWeight with indices.
  std::size_t select_schedule(std::size_t t, std::span<const std::int64_t> q,
                              std::span<const std::size_t>) override {
    state_.t = t;
    return maxweight_select(q, state_.mu_bar_all(), *structure_.schedules, structure_.server_queue);
  }
};

class MaxWeightUcbPolicy final : public LearningPolicy {
 public:
  std::string name() const override { return "mw-ucb"; }
  std::size_t select_schedule(std::size_t t, std::span<const std::int64_t> q,
                              std::span<const std::size_t>) override {
    state_.t = t;
    return maxweight_select(q, state_.mu_bar_all(), *structure_.schedules, structure_.server_queue);
  }
};

class BackPressureUcbPolicy final : public LearningPolicy {
 public:
  std::string name() const override { return "bp-ucb"; }
  std::size_t select_schedule(std::size_t t, std::span<const std::int64_t> q,
                              std::span<const std::size_t>) override {
    state_.t = t;
    return backpressure_select(q, state_.mu_bar_all(), state_.r_lower_all(), *structure_.schedules,
                               structure_.server_queue);
  }
};

/// Full-information oracles. They hold true rates and ignore observations.
class OraclePolicy : public Policy {
 public:
  OraclePolicy(std::vector<double> mu, std::vector<double> rates_out)
      : mu_(std::move(mu)), rates_out_(std::move(rates_out)) {
    best_ = mu_.empty() ? kNoServer
                        : static_cast<std::size_t>(std::max_element(mu_.begin(), mu_.end()) - mu_.begin());
  }
  void reset(const SystemStructure& structure) override { structure_ = structure; }
  std::size_t select_server(std::size_t, std::int64_t q) override { return q > 0 ? best_ : kNoServer; }

 protected:
  SystemStructure structure_;
  std::vector<double> mu_;
  std::vector<double> rates_out_;  // mu_k p_{k,n}, row-major K x N
  std::size_t best_ = kNoServer;
};

class OracleBestPolicy final : public OraclePolicy {
 public:
  using OraclePolicy::OraclePolicy;
  std::string name() const override { return "oracle-best"; }
  std::size_t select_schedule(std::size_t, std::span<const std::int64_t> q, std::span<const std::size_t>) override {
    return maxweight_select(q, mu_, *structure_.schedules, structure_.server_queue);
  }
};

class OracleMaxWeightPolicy final : public OraclePolicy {
 public:
  using OraclePolicy::OraclePolicy;
  std::string name() const override { return "oracle-mw"; }
  std::size_t select_schedule(std::size_t, std::span<const std::int64_t> q, std::span<const std::size_t>) override {
    return maxweight_select(q, mu_, *structure_.schedules, structure_.server_queue);
  }
};

class OracleBackPressurePolicy final : public OraclePolicy {
 public:
  using OraclePolicy::OraclePolicy;
  std::string name() const override { return "oracle-bp"; }
  std::size_t select_schedule(std::size_t, std::span<const std::int64_t> q, std::span<const std::size_t>) override {
    return backpressure_select(q, mu_, rates_out_, *structure_.schedules, structure_.server_queue);
  }
};

/// Always requests server k: its singleton when feasible, else nothing.
class FixedServerPolicy final : public Policy {
 public:
  explicit FixedServerPolicy(std::size_t server) : server_(server) {}
  std::string name() const override { return "fixed:" + std::to_string(server_); }
  void reset(const SystemStructure& structure) override {
    if (server_ >= structure.server_count) {
      throw PolicyError("fixed server " + std::to_string(server_) + " out of range");
    }
    structure_ = structure;
    singleton_ = structure.schedules ? structure.schedules->index_of(Schedule({server_})) : kNoServer;
    zero_ = structure.schedules ? structure.schedules->zero_index() : kNoServer;
  }
  std::size_t select_server(std::size_t, std::int64_t q) override { return q > 0 ? server_ : kNoServer; }
  std::size_t select_schedule(std::size_t, std::span<const std::int64_t>,
                              std::span<const std::size_t> feasible) override {
    if (singleton_ != kNoServer && std::find(feasible.begin(), feasible.end(), singleton_) != feasible.end()) {
      return singleton_;
    }
    return zero_;
  }

 private:
  std::size_t server_;
  SystemStructure structure_;
  std::size_t singleton_ = kNoServer;
  std::size_t zero_ = kNoServer;
};

/// Single queue: server (t-1) mod K whenever the queue is non-empty.
/// Network: cycles through the non-zero schedules in stored order, dropping
/// servers (highest index first) until the schedule fits the queues.
class RoundRobinPolicy final : public Policy {
 public:
  std::string name() const override { return "round-robin"; }
  void reset(const SystemStructure& structure) override {
    structure_ = structure;
    nonzero_.clear();
    if (structure.schedules) {
      for (std::size_t i = 0; i < structure.schedules->size(); ++i) {
        if (!(*structure.schedules)[i].empty()) nonzero_.push_back(i);
      }
    }
  }
  std::size_t select_server(std::size_t t, std::int64_t q) override {
    if (q <= 0 || structure_.server_count == 0) return kNoServer;
    return (t - 1) % structure_.server_count;
  }
  std::size_t select_schedule(std::size_t t, std::span<const std::int64_t> q,
                              std::span<const std::size_t>) override {
    const auto& set = *structure_.schedules;
    if (nonzero_.empty()) return set.zero_index();
    std::vector<std::size_t> servers = set[nonzero_[(t - 1) % nonzero_.size()]].servers();
    std::vector<std::int64_t> used(q.size(), 0);
    for (auto k : servers) ++used[structure_.server_queue[k]];
    for (std::size_t i = servers.size(); i-- > 0;) {
      const std::size_t n = structure_.server_queue[servers[i]];
      if (used[n] > q[n]) {
        --used[n];
        servers.erase(servers.begin() + static_cast<std::ptrdiff_t>(i));
      }
    }
    return set.index_of(Schedule(std::move(servers)));
  }

 private:
  SystemStructure structure_;
  std::vector<std::size_t> nonzero_;
};

/// Row-major K x N matrix of true transition rates mu_k p_{k,n}.
inline std::vector<double> true_transition_rates(const NetworkInstance& inst) {
  std::vector<double> r(inst.server_count * inst.queue_count, 0.0);
  for (std::size_t k = 0; k < inst.server_count; ++k) {
    for (std::size_t n = 0; n < inst.queue_count; ++n) r[k * inst.queue_count + n] = inst.transition_rate(k, n);
  }
  return r;
}

/// Builds a policy from its CLI name. Learners receive nothing about the
/// instance; the engine hands them the structure at reset().
inline PolicyHandle make_policy(std::string_view spec, std::span<const double> mu,
                                std::span<const double> transition_rates = {}) {
  std::vector<double> m(mu.begin(), mu.end());
  std::vector<double> r(transition_rates.begin(), transition_rates.end());
  if (spec == "ucb") return std::make_unique<UcbPolicy>();
  if (spec == "mw-ucb") return std::make_unique<MaxWeightUcbPolicy>();
  if (spec == "bp-ucb") return std::make_unique<BackPressureUcbPolicy>();
  if (spec == "oracle-best") return std::make_unique<OracleBestPolicy>(m, r);
  if (spec == "oracle-mw") return std::make_unique<OracleMaxWeightPolicy>(m, r);
  if (spec == "oracle-bp") return std::make_unique<OracleBackPressurePolicy>(m, r);
  if (spec == "round-robin") return std::make_unique<RoundRobinPolicy>();
  if (spec.starts_with("fixed:")) {
    const auto digits = spec.substr(6);
    std::size_t k = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty()) {
      throw ParseError("bad fixed policy '" + std::string(spec) + "'");
    }
    return std::make_unique<FixedServerPolicy>(k);
  }
  throw ParseError("unknown policy '" + std::string(spec) + "'");
}

inline PolicyHandle make_policy(std::string_view spec, const NetworkInstance& inst) {
  return make_policy(spec, inst.mu, true_transition_rates(inst));
}

inline PolicyHandle make_policy(std::string_view spec, const SingleQueueInstance& inst) {
  return make_policy(spec, inst.mu);
}

}  // namespace clq
