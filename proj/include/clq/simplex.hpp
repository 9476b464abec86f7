#pragma once

// Dense tableau simplex for small LPs:
//   maximize c'x  subject to  Ax <= b, x >= 0.
// Negative entries of b are handled by a phase-1 auxiliary variable. Pivots
// follow Bland's rule, so degenerate problems terminate.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace clq::lp {

enum class Status { optimal, infeasible, unbounded };

struct Solution {
  Status status = Status::infeasible;
  double value = 0.0;
  std::vector<double> x;
};

class DenseSimplex {
 public:
  using Matrix = std::vector<std::vector<double>>;

  DenseSimplex(const Matrix& A, const std::vector<double>& b, const std::vector<double>& c, double eps = 1e-11)
      : m_(b.size()), n_(c.size()), eps_(eps), basis_(m_), nonbasis_(n_ + 1),
        tableau_(m_ + 2, std::vector<double>(n_ + 2, 0.0)) {
    for (std::size_t i = 0; i < m_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) tableau_[i][j] = A[i][j];
      tableau_[i][n_] = -1.0;
      tableau_[i][n_ + 1] = b[i];
      basis_[i] = static_cast<long>(n_ + i);
    }
    for (std::size_t j = 0; j < n_; ++j) {
      nonbasis_[j] = static_cast<long>(j);
      tableau_[m_][j] = -c[j];
    }
    nonbasis_[n_] = -1;  // phase-1 auxiliary
    tableau_[m_ + 1][n_] = 1.0;
  }

  Solution solve() {
    Solution out;
    std::size_t r = 0;
    for (std::size_t i = 1; i < m_; ++i) {
      if (tableau_[i][n_ + 1] < tableau_[r][n_ + 1]) r = i;
    }
    if (m_ > 0 && tableau_[r][n_ + 1] < -eps_) {
      pivot(r, n_);
      if (!run(2) || tableau_[m_ + 1][n_ + 1] < -eps_) {
        out.status = Status::infeasible;
        return out;
      }
      for (std::size_t i = 0; i < m_; ++i) {
        if (basis_[i] != -1) continue;
        std::size_t s = 0;
        bool found = false;
        for (std::size_t j = 0; j <= n_; ++j) {
          if (nonbasis_[j] == -1) continue;
          if (!found || tableau_[i][j] < tableau_[i][s] ||
              (tableau_[i][j] == tableau_[i][s] && nonbasis_[j] < nonbasis_[s])) {
            s = j;
            found = true;
          }
        }
        pivot(i, s);
      }
    }
    if (!run(1)) {
      out.status = Status::unbounded;
      out.value = std::numeric_limits<double>::infinity();
      return out;
    }
    out.status = Status::optimal;
    out.x.assign(n_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      if (basis_[i] >= 0 && static_cast<std::size_t>(basis_[i]) < n_) out.x[basis_[i]] = tableau_[i][n_ + 1];
    }
    out.value = tableau_[m_][n_ + 1];
    return out;
  }

 private:
  void pivot(std::size_t r, std::size_t s) {
    const double inv = 1.0 / tableau_[r][s];
    for (std::size_t i = 0; i < m_ + 2; ++i) {
      if (i == r || tableau_[i][s] == 0.0) continue;
      const double factor = tableau_[i][s] * inv;
      for (std::size_t j = 0; j < n_ + 2; ++j) tableau_[i][j] -= tableau_[r][j] * factor;
      tableau_[i][s] = tableau_[r][s] * factor;
    }
    for (std::size_t j = 0; j < n_ + 2; ++j) {
      if (j != s) tableau_[r][j] *= inv;
    }
    for (std::size_t i = 0; i < m_ + 2; ++i) {
      if (i != r) tableau_[i][s] *= -inv;
    }
    tableau_[r][s] = inv;
    std::swap(basis_[r], nonbasis_[s]);
  }

  // Bland's rule: entering variable with the smallest label among those with
  // negative reduced cost; ratio ties go to the smallest basic label.
  bool run(int phase) {
    const std::size_t objective = phase == 1 ? m_ : m_ + 1;
    for (;;) {
      long best_label = std::numeric_limits<long>::max();
      std::size_t s = n_ + 1;
      for (std::size_t j = 0; j <= n_; ++j) {
        if (phase == 1 && nonbasis_[j] == -1) continue;
        if (tableau_[objective][j] < -eps_ && nonbasis_[j] < best_label) {
          best_label = nonbasis_[j];
          s = j;
        }
      }
      if (s == n_ + 1) return true;
      std::size_t r = m_;
      for (std::size_t i = 0; i < m_; ++i) {
        if (tableau_[i][s] <= eps_) continue;
        if (r == m_) {
          r = i;
          continue;
        }
        const double lhs = tableau_[i][n_ + 1] / tableau_[i][s];
        const double rhs = tableau_[r][n_ + 1] / tableau_[r][s];
        if (lhs < rhs - eps_ || (std::abs(lhs - rhs) <= eps_ && basis_[i] < basis_[r])) r = i;
      }
      if (r == m_) return false;
      pivot(r, s);
    }
  }

  std::size_t m_, n_;
  double eps_;
  std::vector<long> basis_, nonbasis_;
  Matrix tableau_;
};

inline Solution maximize(const DenseSimplex::Matrix& A, const std::vector<double>& b,
                         const std::vector<double>& c) {
  return DenseSimplex(A, b, c).solve();
}

}  // namespace clq::lp
