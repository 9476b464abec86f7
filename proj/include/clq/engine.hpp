#pragma once

// Discrete-time dynamics. Within a period the order is fixed:
// observe Q(t) -> schedule -> service draws -> transition draws ->
// arrival draws -> update Q(t+1) -> reveal outcomes to the policy.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "clq/errors.hpp"
#include "clq/model.hpp"
#include "clq/policy.hpp"
#include "clq/random.hpp"
#include "clq/trace.hpp"

namespace clq {

enum class ServiceCoupling {
  shared_uniform,  // one U(t) per period drives every server indicator
  independent,     // one uniform per server per period
};

inline constexpr std::size_t kAutoStride = std::numeric_limits<std::size_t>::max();

struct RunOptions {
  /// Estimator snapshot period; 0 disables, kAutoStride picks 1 for
  /// horizons up to 1e5 and 100 above.
  std::size_t snapshot_stride = kAutoStride;
  ServiceCoupling coupling = ServiceCoupling::shared_uniform;
};

namespace detail {

inline std::size_t resolve_stride(std::size_t stride, std::size_t horizon) {
  if (stride != kAutoStride) return stride;
  return horizon <= 100000 ? 1 : 100;
}

inline bool snapshot_due(std::size_t stride, std::size_t t) { return stride != 0 && (t - 1) % stride == 0; }

/// Inverse CDF over row k of P with column order 0..N-1, then exit.
inline std::size_t sample_target(std::span<const double> row, double u) {
  double cumulative = 0.0;
  for (std::size_t n = 0; n < row.size(); ++n) {
    cumulative += row[n];
    if (u < cumulative) return n;
  }
  for (std::size_t n = row.size(); n-- > 0;) {
    if (row[n] > 0.0) return n;
  }
  return row.size() - 1;
}

}  // namespace detail

/// Single-queue run. The policy is queried every period; it must answer
/// kNoServer when Q(t) = 0.
inline Trace run_single(const SingleQueueInstance& inst, Policy& policy, std::size_t horizon, std::uint64_t seed,
                        const RunOptions& options = {}) {
  if (horizon == 0) throw ParameterError("horizon must be at least 1");
  const std::size_t K = inst.server_count();
  const RandomSource rng(seed);
  const std::size_t stride = detail::resolve_stride(options.snapshot_stride, horizon);
  policy.reset(SystemStructure{1, K, nullptr, {}});

  Trace trace(1, K);
  trace.reserve(horizon);
  std::int64_t q = 0;
  std::vector<ServiceEvent> events;
  events.reserve(1);
  for (std::size_t t = 1; t <= horizon; ++t) {
    const std::size_t j = policy.select_server(t, q);
    if (j != kNoServer && j >= K) {
      throw PolicyError(policy.name() + " chose server " + std::to_string(j) + " of " + std::to_string(K) +
                        " at t=" + std::to_string(t));
    }
    if (j != kNoServer && q == 0) {
      throw PolicyError(policy.name() + " chose a server for an empty queue at t=" + std::to_string(t));
    }
    if (detail::snapshot_due(stride, t) && policy.state()) trace.snapshots().push_back(policy.state()->snapshot());

    events.clear();
    std::int64_t served = 0;
    if (j != kNoServer) {
      const double u = options.coupling == ServiceCoupling::shared_uniform
                           ? rng.uniform(Stream::service, t, 0)
                           : rng.uniform(Stream::service_independent, t, j);
      const bool success = u <= inst.mu[j];
      served = success ? 1 : 0;
      events.push_back(ServiceEvent{j, success, 1});
    }
    const std::uint8_t arrival = rng.uniform(Stream::arrival, t, 0) < inst.lambda ? 1 : 0;
    q = q - served + arrival;
    trace.append(events, std::span<const std::uint8_t>(&arrival, 1), std::span<const std::int64_t>(&q, 1));
    policy.observe(j == kNoServer ? Schedule{} : Schedule({j}), events, std::span<const std::uint8_t>(&arrival, 1));
  }
  return trace;
}

/// Network run. Selected server i (in index order) uses service slot i and
/// transition slot i, so a one-server schedule draws exactly what the
/// single-queue engine draws.
inline Trace run_network(const NetworkInstance& inst, Policy& policy, std::size_t horizon, std::uint64_t seed,
                         const RunOptions& options = {}) {
  if (horizon == 0) throw ParameterError("horizon must be at least 1");
  const std::size_t N = inst.queue_count;
  const std::size_t K = inst.server_count;
  const RandomSource rng(seed);
  const std::size_t stride = detail::resolve_stride(options.snapshot_stride, horizon);
  policy.reset(SystemStructure{N, K, &inst.schedules, inst.server_queue});

  Trace trace(N, K);
  trace.reserve(horizon);
  std::vector<std::int64_t> q(N, 0), next(N, 0);
  std::vector<ServiceEvent> events;
  for (std::size_t t = 1; t <= horizon; ++t) {
    const auto feasible = feasible_schedules(inst.schedules, inst.server_queue, q);
    const std::size_t idx = policy.select_schedule(t, q, feasible);
    if (std::find(feasible.begin(), feasible.end(), idx) == feasible.end()) {
      throw PolicyError(policy.name() + " chose an infeasible schedule at t=" + std::to_string(t));
    }
    if (detail::snapshot_due(stride, t) && policy.state()) trace.snapshots().push_back(policy.state()->snapshot());
    const Schedule& schedule = inst.schedules[idx];

    events.clear();
    next = q;
    std::size_t slot = 0;
    for (auto k : schedule.servers()) {
      const bool success = rng.uniform(Stream::service, t, slot) <= inst.mu[k];
      std::size_t target = N;
      if (success) {
        target = detail::sample_target(inst.transitions[k], rng.uniform(Stream::transition, t, slot));
        next[inst.server_queue[k]] -= 1;
        if (target < N) next[target] += 1;
      }
      events.push_back(ServiceEvent{k, success, target});
      ++slot;
    }
    const auto& arrival = inst.arrivals.support[inst.arrivals.sample(rng.uniform(Stream::arrival, t, 0))];
    for (std::size_t n = 0; n < N; ++n) next[n] += arrival[n];
    q = next;
    trace.append(events, arrival, q);
    policy.observe(schedule, events, arrival);
  }
  return trace;
}

struct CoupledPair {
  Trace primary;
  Trace auxiliary;  // one server with rate mu* - eps/2, selected whenever non-empty
  double auxiliary_rate = 0.0;
};

/// Runs the policy-driven queue and the auxiliary near-optimal queue on the
/// same arrival draws and the same per-period service uniform U(t).
inline CoupledPair run_coupled_single(const SingleQueueInstance& inst, Policy& policy, std::size_t horizon,
                                      std::uint64_t seed, const RunOptions& options = {}) {
  const double eps = slackness_single(inst);
  if (!(eps > 0.0)) throw ParameterError("coupling needs a stabilizable instance (eps > 0)");
  CoupledPair pair;
  RunOptions primary_options = options;
  primary_options.coupling = ServiceCoupling::shared_uniform;
  pair.primary = run_single(inst, policy, horizon, seed, primary_options);
  pair.auxiliary_rate = inst.best_rate() - eps / 2.0;

  const RandomSource rng(seed);
  Trace aux(1, 1);
  aux.reserve(horizon);
  std::int64_t q = 0;
  std::vector<ServiceEvent> events;
  for (std::size_t t = 1; t <= horizon; ++t) {
    events.clear();
    std::int64_t served = 0;
    if (q > 0) {
      const bool success = rng.uniform(Stream::service, t, 0) <= pair.auxiliary_rate;
      served = success ? 1 : 0;
      events.push_back(ServiceEvent{0, success, 1});
    }
    const std::uint8_t arrival = pair.primary.arrivals(t)[0];
    q = q - served + arrival;
    aux.append(events, std::span<const std::uint8_t>(&arrival, 1), std::span<const std::int64_t>(&q, 1));
  }
  pair.auxiliary = std::move(aux);
  return pair;
}

}  // namespace clq
