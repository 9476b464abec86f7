#pragma once

// Trace metrics: time-averaged queue lengths, cost-of-learning estimates,
// satisficing regret, schedule-weight losses, sample-path diagnostics and
// closed-form theorem bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clq/errors.hpp"
#include "clq/model.hpp"
#include "clq/policy.hpp"
#include "clq/stats.hpp"
#include "clq/trace.hpp"

namespace clq {

/// Seed-aggregated series over T = 1..horizon (index T-1).
struct MetricSeries {
  std::size_t horizon = 0;
  std::size_t runs = 0;
  std::vector<double> avg_queue_mean;  // mean over runs of (1/T) sum_{t<=T} ||Q(t)||_1
  std::vector<double> avg_queue_se;
  std::vector<double> queue_mean;  // mean over runs of ||Q(T)||_1
  std::vector<double> queue_se;
  std::vector<double> sar_mean;  // empty when not computed
  std::vector<double> sar_se;
  std::vector<double> delta_mean;  // empty when not computed
};

/// Per-run series feeding a MetricSeries.
struct TraceSummary {
  std::vector<double> avg_queue;
  std::vector<double> queue;
  std::vector<double> sar;
  std::vector<double> delta;
};

inline TraceSummary queue_summary(const Trace& trace) {
  TraceSummary s;
  const std::size_t T = trace.horizon();
  s.avg_queue.resize(T);
  s.queue.resize(T);
  std::int64_t cumulative = 0;
  for (std::size_t t = 1; t <= T; ++t) {
    const std::int64_t total = trace.total_queue(t);
    cumulative += total;
    s.queue[t - 1] = static_cast<double>(total);
    s.avg_queue[t - 1] = static_cast<double>(cumulative) / static_cast<double>(t);
  }
  return s;
}

/// Accumulates run summaries in the order they are added.
class SeriesAccumulator {
 public:
  explicit SeriesAccumulator(std::size_t horizon)
      : horizon_(horizon), avg_(horizon), queue_(horizon), sar_(horizon), delta_(horizon) {}

  void add(const TraceSummary& s) {
    if (s.avg_queue.size() != horizon_) throw GridMismatch("run horizon differs from accumulator horizon");
    if (runs_ == 0) {
      has_sar_ = !s.sar.empty();
      has_delta_ = !s.delta.empty();
    }
    for (std::size_t i = 0; i < horizon_; ++i) {
      avg_[i].add(s.avg_queue[i]);
      queue_[i].add(s.queue[i]);
      if (has_sar_) sar_[i].add(s.sar[i]);
      if (has_delta_) delta_[i].add(s.delta[i]);
    }
    ++runs_;
  }

  std::size_t runs() const { return runs_; }

  MetricSeries finish() const {
    MetricSeries m;
    m.horizon = horizon_;
    m.runs = runs_;
    for (std::size_t i = 0; i < horizon_; ++i) {
      m.avg_queue_mean.push_back(avg_[i].mean());
      m.avg_queue_se.push_back(avg_[i].se());
      m.queue_mean.push_back(queue_[i].mean());
      m.queue_se.push_back(queue_[i].se());
      if (has_sar_) {
        m.sar_mean.push_back(sar_[i].mean());
        m.sar_se.push_back(sar_[i].se());
      }
      if (has_delta_) m.delta_mean.push_back(delta_[i].mean());
    }
    return m;
  }

 private:
  std::size_t horizon_;
  std::size_t runs_ = 0;
  bool has_sar_ = false;
  bool has_delta_ = false;
  std::vector<RunningStats> avg_, queue_, sar_, delta_;
};

inline MetricSeries time_averaged_series(std::span<const Trace> traces) {
  if (traces.empty()) throw EmptyInput("no traces");
  SeriesAccumulator acc(traces.front().horizon());
  for (const auto& t : traces) {
    if (t.horizon() != traces.front().horizon()) throw GridMismatch("traces have different horizons");
    acc.add(queue_summary(t));
  }
  return acc.finish();
}

struct ClqEstimate {
  double value = 0.0;
  std::size_t peak_horizon = 0;  // T* attaining the max
  std::size_t horizon = 0;
  double se = 0.0;  // unpaired SE of the difference at T*
  /// The peak sits in the last 10% of the horizon, so a later peak may exist.
  bool late_peak = false;
};

/// max_T (policy avg(T) - benchmark avg(T)); a null benchmark is the zero series.
inline ClqEstimate clq_estimate(const MetricSeries& policy, const MetricSeries* benchmark = nullptr) {
  if (policy.horizon == 0) throw EmptyInput("empty series");
  if (benchmark && benchmark->horizon != policy.horizon) throw GridMismatch("series horizons differ");
  ClqEstimate e;
  e.horizon = policy.horizon;
  for (std::size_t i = 0; i < policy.horizon; ++i) {
    const double d = policy.avg_queue_mean[i] - (benchmark ? benchmark->avg_queue_mean[i] : 0.0);
    if (i == 0 || d > e.value) {
      e.value = d;
      e.peak_horizon = i + 1;
    }
  }
  const std::size_t i = e.peak_horizon - 1;
  const double a = policy.avg_queue_se[i];
  const double b = benchmark ? benchmark->avg_queue_se[i] : 0.0;
  e.se = std::sqrt(a * a + b * b);
  e.late_peak = static_cast<double>(e.peak_horizon) > 0.9 * static_cast<double>(e.horizon);
  return e;
}

/// Running max over T' <= T of policy avg minus benchmark avg.
inline std::vector<double> running_clq(const MetricSeries& policy, const MetricSeries* benchmark = nullptr) {
  std::vector<double> out(policy.horizon);
  double best = 0.0;
  for (std::size_t i = 0; i < policy.horizon; ++i) {
    const double d = policy.avg_queue_mean[i] - (benchmark ? benchmark->avg_queue_mean[i] : 0.0);
    best = i == 0 ? d : std::max(best, d);
    out[i] = best;
  }
  return out;
}

/// Cumulative sum of (mu* - mu_J(t) - eps/2)^+ 1{Q(t) >= 1}.
inline std::vector<double> sar_single(const Trace& trace, const SingleQueueInstance& inst, double epsilon) {
  if (!(epsilon > 0.0)) throw ParameterError("satisficing regret needs eps > 0");
  const double mu_star = inst.best_rate();
  std::vector<double> out(trace.horizon());
  double total = 0.0;
  for (std::size_t t = 1; t <= trace.horizon(); ++t) {
    if (trace.queue(t)[0] >= 1) {
      const auto ev = trace.events(t);
      const double chosen = ev.empty() ? 0.0 : inst.mu[ev.front().server];
      total += std::max(mu_star - chosen - epsilon / 2.0, 0.0);
    }
    out[t - 1] = total;
  }
  return out;
}

/// True-rate weight W_sigma(t); the network form subtracts expected inflow.
inline double schedule_weight(std::span<const std::int64_t> q, const Schedule& schedule,
                              const NetworkInstance& inst, bool networked) {
  double w = 0.0;
  for (auto k : schedule.servers()) {
    double term = static_cast<double>(q[inst.server_queue[k]]) * inst.mu[k];
    if (networked) {
      for (std::size_t n = 0; n < inst.queue_count; ++n) {
        term -= static_cast<double>(q[n]) * inst.mu[k] * inst.transitions[k][n];
      }
    }
    w += term;
  }
  return w;
}

namespace detail {

/// Weight divided by ||q||_inf, evaluated with per-queue ratios q_n/qmax so a
/// single queue gives exactly sum of mu_k.
inline double normalized_weight(std::span<const double> ratio, const Schedule& schedule,
                                const NetworkInstance& inst, bool networked) {
  double w = 0.0;
  for (auto k : schedule.servers()) {
    double term = ratio[inst.server_queue[k]] * inst.mu[k];
    if (networked) {
      for (std::size_t n = 0; n < inst.queue_count; ++n) term -= ratio[n] * inst.mu[k] * inst.transitions[k][n];
    }
    w += term;
  }
  return w;
}

inline std::int64_t max_norm(std::span<const std::int64_t> q) {
  std::int64_t m = 0;
  for (auto x : q) m = std::max(m, x);
  return m;
}

inline std::vector<double> ratios(std::span<const std::int64_t> q, std::int64_t qmax) {
  std::vector<double> r(q.size());
  for (std::size_t n = 0; n < q.size(); ++n) r[n] = static_cast<double>(q[n]) / static_cast<double>(qmax);
  return r;
}

inline double best_normalized_weight(std::span<const std::int64_t> q, std::span<const double> ratio,
                                     const NetworkInstance& inst, bool networked) {
  double best = 0.0;
  bool first = true;
  for (auto i : feasible_schedules(inst.schedules, inst.server_queue, q)) {
    const double w = normalized_weight(ratio, inst.schedules[i], inst, networked);
    if (first || w > best) best = w;
    first = false;
  }
  return best;
}

}  // namespace detail

/// Schedule-weight loss against the true-rate MaxWeight (or BackPressure when
/// networked) schedule over the feasible set, normalized by max_n Q_n.
inline double delta_loss(std::span<const std::int64_t> q, const Schedule& chosen, const NetworkInstance& inst,
                         bool networked) {
  const std::int64_t qmax = detail::max_norm(q);
  if (qmax == 0) return 0.0;
  const auto ratio = detail::ratios(q, qmax);
  return detail::best_normalized_weight(q, ratio, inst, networked) -
         detail::normalized_weight(ratio, chosen, inst, networked);
}

/// Per-period Delta(t). The comparator is reused while Q(t) repeats.
inline std::vector<double> delta_series(const Trace& trace, const NetworkInstance& inst, bool networked) {
  std::vector<double> out(trace.horizon());
  std::vector<std::int64_t> prev;
  std::vector<double> ratio;
  double best = 0.0;
  for (std::size_t t = 1; t <= trace.horizon(); ++t) {
    const auto q = trace.queue(t);
    const std::int64_t qmax = detail::max_norm(q);
    if (qmax == 0) {
      out[t - 1] = 0.0;
      continue;
    }
    if (prev.size() != q.size() || !std::equal(prev.begin(), prev.end(), q.begin())) {
      prev.assign(q.begin(), q.end());
      ratio = detail::ratios(q, qmax);
      best = detail::best_normalized_weight(q, ratio, inst, networked);
    }
    out[t - 1] = best - detail::normalized_weight(ratio, trace.schedule(t), inst, networked);
  }
  return out;
}

/// Cumulative sum of (Delta(t) - eps/2)^+.
inline std::vector<double> sar_multi(const Trace& trace, const NetworkInstance& inst, double epsilon,
                                     bool networked) {
  if (!(epsilon > 0.0)) throw ParameterError("satisficing regret needs eps > 0");
  const auto delta = delta_series(trace, inst, networked);
  std::vector<double> out(delta.size());
  double total = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    total += std::max(delta[i] - epsilon / 2.0, 0.0);
    out[i] = total;
  }
  return out;
}

struct CheckResult {
  std::string name;
  bool pass = true;
  double margin = 0.0;  // worst (smallest) slack over all periods; negative means violated
  std::size_t first_failure = 0;  // period of the first violation, 0 if none
};

struct LyapunovReport {
  std::vector<CheckResult> checks;
  double drift_estimate = 0.0;  // mean of V(t+1) - V(t), V = sum_n Q_n^2

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }
  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

namespace detail {

inline void tally(CheckResult& c, double slack, std::size_t t, double tol = 0.0) {
  if (t == 1 || slack < c.margin) c.margin = slack;
  if (slack < -tol && c.pass) {
    c.pass = false;
    c.first_failure = t;
  }
}

}  // namespace detail

/// Sample-path checks that hold on every trajectory:
///  - single_queue_sum_vs_max: sum Q >= (max Q)^2 / 2 on every prefix
///    (one-queue systems with at most one arrival per period)
///  - sum_vs_max_l1: sum ||Q||_1 >= (max ||Q||_1)^2 / (4 M_arr) on every prefix
///  - l1_increase: ||Q(t+1)||_1 <= ||Q(t)||_1 + M_arr
///  - l2_bounded_difference: | ||Q(t+1)||_2 - ||Q(t)||_2 | <= sqrt(M_arr + M_sigma^2)
///    (exit-only) or sqrt(2 M_arr + 3 M_sigma^2) (network)
///  - delta_bounds: 0 <= Delta(t) <= M_sigma (exit-only) or 2 M_sigma (network)
inline LyapunovReport lyapunov_report(const Trace& trace, const NetworkInstance& inst) {
  LyapunovReport r;
  const auto c = structure_constants(inst);
  const bool networked = !inst.exit_only();
  const std::size_t T = trace.horizon();
  const bool single_queue = inst.queue_count == 1 && c.m_arr <= 1;

  CheckResult sum_max_single{"single_queue_sum_vs_max"};
  CheckResult sum_max{"sum_vs_max_l1"};
  CheckResult l1{"l1_increase"};
  CheckResult l2{"l2_bounded_difference"};
  CheckResult delta_check{"delta_bounds"};

  const double l2_bound = networked ? std::sqrt(2.0 * c.m_arr + 3.0 * double(c.m_sigma * c.m_sigma))
                                    : std::sqrt(double(c.m_arr) + double(c.m_sigma * c.m_sigma));
  const double delta_cap = (networked ? 2.0 : 1.0) * static_cast<double>(c.m_sigma);
  const auto delta = delta_series(trace, inst, networked);

  std::int64_t sum = 0, max_l1 = 0;
  double drift = 0.0;
  auto v_of = [&](std::size_t t) {
    double v = 0.0;
    for (auto x : trace.queue(t)) v += double(x) * double(x);
    return v;
  };
  for (std::size_t t = 1; t <= T; ++t) {
    const std::int64_t l1_now = trace.total_queue(t);
    sum += l1_now;
    max_l1 = std::max(max_l1, l1_now);
    if (single_queue) {
      detail::tally(sum_max_single, double(sum) - double(max_l1) * double(max_l1) / 2.0, t);
    }
    if (c.m_arr > 0) {
      detail::tally(sum_max, double(sum) - double(max_l1) * double(max_l1) / (4.0 * double(c.m_arr)), t);
    } else {
      detail::tally(sum_max, max_l1 == 0 ? 0.0 : -1.0, t);
    }
    const std::int64_t l1_next = trace.total_queue(t + 1);
    detail::tally(l1, double(static_cast<std::int64_t>(c.m_arr) + l1_now - l1_next), t);
    const double v_now = v_of(t), v_next = v_of(t + 1);
    detail::tally(l2, l2_bound - std::abs(std::sqrt(v_next) - std::sqrt(v_now)), t, 1e-9);
    drift += v_next - v_now;
    const double d = delta[t - 1];
    detail::tally(delta_check, std::min(d, delta_cap - d), t, 1e-9);
  }
  if (single_queue) r.checks.push_back(sum_max_single);
  r.checks.push_back(sum_max);
  r.checks.push_back(l1);
  r.checks.push_back(l2);
  r.checks.push_back(delta_check);
  r.drift_estimate = T ? drift / double(T) : 0.0;
  return r;
}

struct TheoremBounds {
  double ucb_clq_upper = 0.0;
  double mw_clq_upper = 0.0;
  double bp_clq_upper = 0.0;
  std::optional<double> single_lower;        // only for K >= 2^14, eps <= 0.25
  std::optional<double> optimal_avg_upper;   // single-queue only
};

inline TheoremBounds theorem_bounds(std::size_t queue_count, std::size_t server_count, const StructureConstants& c,
                                    double epsilon, std::optional<double> single_lambda) {
  if (!(epsilon > 0.0)) throw ParameterError("theorem bounds need eps > 0");
  const double K = static_cast<double>(server_count);
  const double sqrt_n = std::sqrt(static_cast<double>(queue_count));
  const double m_arr = static_cast<double>(c.m_arr);
  const double m_sigma = static_cast<double>(c.m_sigma);
  const double m_dep = static_cast<double>(c.m_dep);
  TheoremBounds b;
  b.ucb_clq_upper = (323.0 * K + 64.0 * K * (std::log(K) + 2.0 * std::log(1.0 / epsilon))) / epsilon;
  b.mw_clq_upper = sqrt_n *
                   (16.0 * m_arr + 1024.0 * K * m_sigma * m_sigma * (1.0 + std::log(m_arr * K * m_sigma / epsilon))) /
                   epsilon;
  b.bp_clq_upper =
      sqrt_n *
      (32.0 * m_arr + 4096.0 * m_dep * m_sigma * m_sigma * (1.0 + std::log(m_arr * m_dep * m_sigma / epsilon))) /
      epsilon;
  if (server_count >= 16384 && epsilon <= 0.25) b.single_lower = K / (16384.0 * epsilon);
  if (single_lambda) b.optimal_avg_upper = *single_lambda / epsilon + 0.5;
  return b;
}

inline TheoremBounds theorem_bounds(const SingleQueueInstance& inst, double epsilon) {
  return theorem_bounds(1, inst.server_count(), structure_constants(embed(inst)), epsilon, inst.lambda);
}

inline TheoremBounds theorem_bounds(const NetworkInstance& inst, double epsilon) {
  std::optional<double> lambda;
  if (inst.queue_count == 1 && inst.exit_only()) lambda = inst.lambda()[0];
  return theorem_bounds(inst.queue_count, inst.server_count, structure_constants(inst), epsilon, lambda);
}

/// Satisficing-regret ceiling for UCB on a single queue: 16K(ln T + 2)/eps.
inline double ucb_sar_ceiling(std::size_t server_count, std::size_t T, double epsilon) {
  return 16.0 * static_cast<double>(server_count) * (std::log(static_cast<double>(T)) + 2.0) / epsilon;
}

}  // namespace clq
