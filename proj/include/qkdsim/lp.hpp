// Dense two-phase simplex for the small yield-bounding programs
// (tens of variables and constraints). Bland's rule, no external solver.

#ifndef QKDSIM_LP_HPP
#define QKDSIM_LP_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace qkdsim {

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
};

// maximize c^T x  subject to  A x <= b,  x >= 0.  b may be negative.
inline LpResult solve_lp(const std::vector<std::vector<double>>& a,
                         const std::vector<double>& b,
                         const std::vector<double>& c) {
  const std::size_t m = a.size();
  const std::size_t n = c.size();
  constexpr double eps = 1e-9;

  // Columns: n structural, m slack, up to m artificial, then RHS.
  std::size_t n_art = 0;
  for (double bi : b)
    if (bi < 0.0) ++n_art;
  const std::size_t cols = n + m + n_art + 1;
  std::vector<std::vector<double>> t(m, std::vector<double>(cols, 0.0));
  std::vector<std::size_t> basis(m);

  std::size_t art = n + m;
  for (std::size_t i = 0; i < m; ++i) {
    const double sign = b[i] < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < n; ++j) t[i][j] = sign * a[i][j];
    t[i][n + i] = sign;  // slack
    t[i][cols - 1] = sign * b[i];
    if (b[i] < 0.0) {
      t[i][art] = 1.0;
      basis[i] = art++;
    } else {
      basis[i] = n + i;
    }
  }

  auto pivot = [&](std::size_t pr, std::size_t pc) {
    const double pv = t[pr][pc];
    for (std::size_t j = 0; j < cols; ++j) t[pr][j] /= pv;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == pr) continue;
      const double f = t[i][pc];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < cols; ++j) t[i][j] -= f * t[pr][j];
    }
    basis[pr] = pc;
  };

  // Runs simplex for the objective `obj` (maximization, length cols-1,
  // coefficients on current structural/slack/artificial columns).
  auto optimize = [&](const std::vector<double>& obj,
                      std::size_t usable_cols) -> LpStatus {
    while (true) {
      // reduced costs: obj_j - obj_B^T B^-1 A_j
      std::size_t pc = usable_cols;
      for (std::size_t j = 0; j < usable_cols; ++j) {
        double red = obj[j];
        for (std::size_t i = 0; i < m; ++i) red -= obj[basis[i]] * t[i][j];
        if (red > eps) {  // Bland: first improving column
          pc = j;
          break;
        }
      }
      if (pc == usable_cols) return LpStatus::Optimal;

      std::size_t pr = m;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m; ++i) {
        if (t[i][pc] > eps) {
          const double ratio = t[i][cols - 1] / t[i][pc];
          if (ratio < best - eps ||
              (ratio < best + eps && (pr == m || basis[i] < basis[pr]))) {
            best = ratio;
            pr = i;
          }
        }
      }
      if (pr == m) return LpStatus::Unbounded;
      pivot(pr, pc);
    }
  };

  if (n_art > 0) {
    std::vector<double> phase1(cols - 1, 0.0);
    for (std::size_t j = n + m; j < n + m + n_art; ++j) phase1[j] = -1.0;
    optimize(phase1, cols - 1);
    double infeas = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (basis[i] >= n + m) infeas += t[i][cols - 1];
    if (infeas > 1e-7) return {LpStatus::Infeasible, {}, 0.0};
    // drive remaining degenerate artificials out of the basis
    for (std::size_t i = 0; i < m; ++i) {
      if (basis[i] < n + m) continue;
      for (std::size_t j = 0; j < n + m; ++j)
        if (std::abs(t[i][j]) > eps) {
          pivot(i, j);
          break;
        }
    }
  }

  std::vector<double> phase2(cols - 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) phase2[j] = c[j];
  const LpStatus st = optimize(phase2, n + m);  // artificials stay out
  if (st != LpStatus::Optimal) return {st, {}, 0.0};

  LpResult res;
  res.status = LpStatus::Optimal;
  res.x.assign(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    if (basis[i] < n) res.x[basis[i]] = t[i][cols - 1];
  res.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) res.objective += c[j] * res.x[j];
  return res;
}

}  // namespace qkdsim

#endif  // QKDSIM_LP_HPP
