#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "clq/errors.hpp"
#include "clq/model.hpp"
#include "clq/simplex.hpp"

namespace clq {

inline constexpr std::size_t kDefaultScheduleCap = 4096;

struct SlacknessResult {
  double epsilon = 0.0;
  std::vector<double> witness;  // distribution over instance.schedules

  bool stabilizable() const { return epsilon > 0.0; }
};

/// Largest uniform margin eps with lambda + eps*1 inside the capacity region,
/// plus a schedule distribution attaining it.
///
/// LP over (phi, e) with e = eps + 1 >= 0 (the optimum is at least -max lambda):
///   max e  s.t.  -mu^net(phi)_n + e <= 1 - lambda_n,  sum phi = 1,  phi >= 0.
inline SlacknessResult traffic_slackness(const NetworkInstance& inst,
                                         std::size_t schedule_cap = kDefaultScheduleCap) {
  const std::size_t S = inst.schedules.size();
  const std::size_t N = inst.queue_count;
  if (S > schedule_cap) {
    throw EnumerationCapExceeded("schedule set has " + std::to_string(S) + " schedules, cap is " +
                                 std::to_string(schedule_cap));
  }
  if (S == 0) throw InvalidInstance("schedule set is empty");

  std::vector<std::vector<double>> columns;
  columns.reserve(S);
  for (const auto& s : inst.schedules) columns.push_back(schedule_service_vector(inst, s));
  const auto lambda = inst.lambda();

  lp::DenseSimplex::Matrix A;
  std::vector<double> b;
  for (std::size_t n = 0; n < N; ++n) {
    std::vector<double> row(S + 1, 0.0);
    for (std::size_t i = 0; i < S; ++i) row[i] = -columns[i][n];
    row[S] = 1.0;
    A.push_back(std::move(row));
    b.push_back(1.0 - lambda[n]);
  }
  std::vector<double> ones(S + 1, 1.0), neg_ones(S + 1, -1.0);
  ones[S] = 0.0;
  neg_ones[S] = 0.0;
  A.push_back(ones);
  b.push_back(1.0);
  A.push_back(neg_ones);
  b.push_back(-1.0);
  std::vector<double> c(S + 1, 0.0);
  c[S] = 1.0;

  const auto sol = lp::maximize(A, b, c);
  if (sol.status != lp::Status::optimal) {
    throw LpError("slackness LP did not reach an optimum");
  }

  SlacknessResult out;
  out.witness.assign(sol.x.begin(), sol.x.begin() + static_cast<std::ptrdiff_t>(S));
  double total = 0.0;
  for (auto& p : out.witness) {
    p = std::max(p, 0.0);
    total += p;
  }
  for (auto& p : out.witness) p /= total;

  // Report the margin the witness actually achieves so the two always agree.
  const auto rate = effective_service_rate(inst, out.witness);
  out.epsilon = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < N; ++n) out.epsilon = std::min(out.epsilon, rate[n] - lambda[n]);
  return out;
}

}  // namespace clq
