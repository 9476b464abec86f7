#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "clq/errors.hpp"

namespace clq {

/// Welford mean/variance. Combining is only deterministic when samples are
/// added in a fixed order; callers feed runs in seed order.
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  /// Standard error of the mean.
  double se() const { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

/// Two-sample chi-square test of homogeneity on histogram counts over the
/// same bins. Bins empty in both samples are dropped.
inline ChiSquareResult chi_square_homogeneity(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw ParameterError("histograms must share bins");
  double na = 0.0, nb = 0.0;
  for (auto x : a) na += static_cast<double>(x);
  for (auto x : b) nb += static_cast<double>(x);
  if (na == 0.0 || nb == 0.0) throw EmptyInput("empty histogram");
  const double total = na + nb;
  ChiSquareResult out;
  std::size_t bins = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double col = static_cast<double>(a[i] + b[i]);
    if (col == 0.0) continue;
    ++bins;
    const double ea = na * col / total;
    const double eb = nb * col / total;
    out.statistic += (static_cast<double>(a[i]) - ea) * (static_cast<double>(a[i]) - ea) / ea;
    out.statistic += (static_cast<double>(b[i]) - eb) * (static_cast<double>(b[i]) - eb) / eb;
  }
  if (bins < 2) return out;
  out.dof = bins - 1;
  const boost::math::chi_squared dist(static_cast<double>(out.dof));
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

}  // namespace clq
