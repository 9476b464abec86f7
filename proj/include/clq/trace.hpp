#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clq/model.hpp"

namespace clq {

/// Outcome for one selected server in one period. `target` is the queue the
/// job moved to (queue_count for the exit queue); it is meaningful only when
/// `success` is set and is stored as the exit column otherwise.
struct ServiceEvent {
  std::size_t server = 0;
  bool success = false;
  std::size_t target = 0;

  friend bool operator==(const ServiceEvent&, const ServiceEvent&) = default;
};

struct EstimatorSnapshot {
  std::size_t t = 0;
  std::vector<double> mu_hat;
  std::vector<std::uint64_t> count;
  std::vector<double> r_hat;  // row-major K x N

  friend bool operator==(const EstimatorSnapshot&, const EstimatorSnapshot&) = default;
};

/// Per-period record of a run, stored column-wise. Periods are 1-based:
/// queue(t) is Q(t) for t in [1, horizon + 1], events/arrivals cover
/// t in [1, horizon].
class Trace {
 public:
  Trace() = default;
  Trace(std::size_t queue_count, std::size_t server_count)
      : queue_count_(queue_count), server_count_(server_count) {
    queues_.assign(queue_count_, 0);
    offsets_.push_back(0);
  }

  void reserve(std::size_t horizon) {
    queues_.reserve((horizon + 1) * queue_count_);
    arrivals_.reserve(horizon * queue_count_);
    offsets_.reserve(horizon + 1);
  }

  /// Appends period t = horizon()+1: its events and arrivals, then Q(t+1).
  void append(std::span<const ServiceEvent> events, std::span<const std::uint8_t> arrivals,
              std::span<const std::int64_t> next_queue) {
    events_.insert(events_.end(), events.begin(), events.end());
    offsets_.push_back(events_.size());
    arrivals_.insert(arrivals_.end(), arrivals.begin(), arrivals.end());
    queues_.insert(queues_.end(), next_queue.begin(), next_queue.end());
  }

  std::size_t queue_count() const { return queue_count_; }
  std::size_t server_count() const { return server_count_; }
  std::size_t horizon() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }

  std::span<const std::int64_t> queue(std::size_t t) const {
    return {queues_.data() + (t - 1) * queue_count_, queue_count_};
  }
  std::span<const std::uint8_t> arrivals(std::size_t t) const {
    return {arrivals_.data() + (t - 1) * queue_count_, queue_count_};
  }
  std::span<const ServiceEvent> events(std::size_t t) const {
    return {events_.data() + offsets_[t - 1], offsets_[t] - offsets_[t - 1]};
  }

  Schedule schedule(std::size_t t) const {
    std::vector<std::size_t> servers;
    for (const auto& e : events(t)) servers.push_back(e.server);
    return Schedule(std::move(servers));
  }

  std::int64_t total_queue(std::size_t t) const {
    std::int64_t s = 0;
    for (auto q : queue(t)) s += q;
    return s;
  }

  std::vector<EstimatorSnapshot>& snapshots() { return snapshots_; }
  const std::vector<EstimatorSnapshot>& snapshots() const { return snapshots_; }

  /// Direct access for fault injection and bulk import.
  std::vector<std::int64_t>& raw_queues() { return queues_; }
  std::vector<ServiceEvent>& raw_events() { return events_; }

  friend bool operator==(const Trace&, const Trace&) = default;

 private:
  std::size_t queue_count_ = 0;
  std::size_t server_count_ = 0;
  std::vector<std::int64_t> queues_;
  std::vector<std::uint8_t> arrivals_;
  std::vector<std::size_t> offsets_;
  std::vector<ServiceEvent> events_;
  std::vector<EstimatorSnapshot> snapshots_;
};

struct ReplayMismatch {
  std::size_t period = 0;  // first period whose recorded successor disagrees (0: Q(1) != 0)
  std::string detail;
};

/// Re-applies the queue dynamics to the recorded events and compares with the
/// recorded queue vectors. Returns the first disagreement, if any.
inline std::optional<ReplayMismatch> replay_check(const Trace& trace, std::span<const std::size_t> server_queue) {
  const std::size_t N = trace.queue_count();
  for (std::size_t n = 0; n < N; ++n) {
    if (trace.queue(1)[n] != 0) return ReplayMismatch{0, "Q(1) is not zero"};
  }
  std::vector<std::int64_t> next(N);
  for (std::size_t t = 1; t <= trace.horizon(); ++t) {
    const auto q = trace.queue(t);
    next.assign(q.begin(), q.end());
    const auto arrivals = trace.arrivals(t);
    for (std::size_t n = 0; n < N; ++n) next[n] += arrivals[n];
    for (const auto& e : trace.events(t)) {
      if (e.server >= server_queue.size()) {
        return ReplayMismatch{t, "event names unknown server " + std::to_string(e.server)};
      }
      if (!e.success) continue;
      next[server_queue[e.server]] -= 1;
      if (e.target < N) next[e.target] += 1;
    }
    const auto recorded = trace.queue(t + 1);
    for (std::size_t n = 0; n < N; ++n) {
      if (recorded[n] != next[n]) {
        return ReplayMismatch{t, "queue " + std::to_string(n) + " recorded " + std::to_string(recorded[n]) +
                                     " but dynamics give " + std::to_string(next[n])};
      }
      if (recorded[n] < 0) return ReplayMismatch{t, "negative queue length"};
    }
  }
  return std::nullopt;
}

}  // namespace clq
