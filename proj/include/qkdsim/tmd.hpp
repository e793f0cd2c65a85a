// Time-multiplexed detector model: binomial loss, time-bin convolution,
// statistical inversion of click distributions, and vacuum filtering.

#ifndef QKDSIM_TMD_HPP
#define QKDSIM_TMD_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkdsim/photon_stats.hpp"

namespace qkdsim {

struct singular_matrix_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct no_signal_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dark counts are identically zero in this model: time triggering on the
// TMD side suppresses them, so outcome m never exceeds the input n.
struct TMDModel {
  int n_bins = 8;
  double eta_tmd = 0.5;
  int n_max = kDefaultNMax;
};

enum class MatrixKind { Loss, Convolution, Composite };

// Column-stochastic (n_max+1)x(n_max+1) matrix mapping true photon number
// (column) to outcome (row). Loss and Convolution are upper triangular.
struct TriangularMatrix {
  std::vector<std::vector<double>> entries;  // [row m][col n]
  MatrixKind kind = MatrixKind::Composite;

  int dim() const { return static_cast<int>(entries.size()); }
  double at(int m, int n) const {
    return entries[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)];
  }
};

inline double binomial_coeff(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double c = 1.0;
  for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
  return c;
}

// entry[m][n] = C(n,m) eta^m (1-eta)^(n-m): each photon survives
// independently with probability eta.
inline TriangularMatrix loss_matrix(double eta, int n_max) {
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("eta out of [0,1]");
  const int d = n_max + 1;
  TriangularMatrix L;
  L.kind = MatrixKind::Loss;
  L.entries.assign(d, std::vector<double>(d, 0.0));
  for (int n = 0; n < d; ++n)
    for (int m = 0; m <= n; ++m)
      L.entries[m][n] = binomial_coeff(n, m) * std::pow(eta, m) *
                        std::pow(1.0 - eta, n - m);
  return L;
}

// entry[m][k] = probability that k photons thrown uniformly into n_bins bins
// occupy exactly m distinct bins (inclusion-exclusion form).
inline TriangularMatrix convolution_matrix(int n_bins, int n_max) {
  if (n_bins < 1) throw std::invalid_argument("n_bins must be >= 1");
  const int d = n_max + 1;
  TriangularMatrix C;
  C.kind = MatrixKind::Convolution;
  C.entries.assign(d, std::vector<double>(d, 0.0));
  for (int k = 0; k < d; ++k) {
    const int m_top = std::min(k, n_bins);
    if (k == 0) {
      C.entries[0][0] = 1.0;
      continue;
    }
    for (int m = 1; m <= m_top; ++m) {
      double s = 0.0;
      for (int j = 0; j < m; ++j) {
        const double term = binomial_coeff(m, j) *
                            std::pow(static_cast<double>(m - j) / n_bins, k);
        s += (j % 2 == 0) ? term : -term;
      }
      C.entries[m][k] = binomial_coeff(n_bins, m) * s;
    }
  }
  return C;
}

inline TriangularMatrix composite_matrix(const TMDModel& model) {
  const TriangularMatrix L = loss_matrix(model.eta_tmd, model.n_max);
  const TriangularMatrix C = convolution_matrix(model.n_bins, model.n_max);
  const int d = model.n_max + 1;
  TriangularMatrix M;
  M.kind = MatrixKind::Composite;
  M.entries.assign(d, std::vector<double>(d, 0.0));
  // Loss acts first: M = C * L.
  for (int m = 0; m < d; ++m)
    for (int n = m; n < d; ++n) {
      double s = 0.0;
      for (int k = m; k <= n; ++k) s += C.entries[m][k] * L.entries[k][n];
      M.entries[m][n] = s;
    }
  return M;
}

inline PhotonDistribution forward(const TMDModel& model,
                                  const PhotonDistribution& source) {
  if (source.n_max() != model.n_max)
    throw std::invalid_argument("source/model dimension mismatch");
  const TriangularMatrix M = composite_matrix(model);
  const int d = model.n_max + 1;
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int m = 0; m < d; ++m) {
    double s = 0.0;
    for (int n = m; n < d; ++n) s += M.entries[m][n] * source[n];
    out[static_cast<std::size_t>(m)] = s;
  }
  double sum = 0.0;
  for (double v : out) sum += v;
  return PhotonDistribution(std::move(out), std::clamp(1.0 - sum, 0.0, 1.0));
}

enum class InversionMethod { TriangularSolve, ConstrainedLeastSquares };

constexpr double kNegativityTol = 1e-6;

struct InversionResult {
  PhotonDistribution distribution;
  double negative_mass = 0.0;   // clipped |negative entries| total
  bool negativity_warning = false;
};

namespace detail {

// Back substitution on the upper-triangular composite matrix.
inline std::vector<double> solve_upper(const TriangularMatrix& M,
                                       const std::vector<double>& b) {
  const int d = M.dim();
  std::vector<double> x(static_cast<std::size_t>(d), 0.0);
  for (int i = d - 1; i >= 0; --i) {
    const double diag = M.entries[i][i];
    if (std::abs(diag) < 1e-300)
      throw singular_matrix_error(
          "composite matrix singular at n = " + std::to_string(i) +
          " (eta_tmd = 0 or photon number beyond bin saturation)");
    double s = b[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < d; ++j) s -= M.entries[i][j] * x[static_cast<std::size_t>(j)];
    x[static_cast<std::size_t>(i)] = s / diag;
  }
  return x;
}

// Dense Lawson-Hanson non-negative least squares: argmin |Ax - b| with
// x >= 0, A given row-major.
inline std::vector<double> nnls_dense(const std::vector<std::vector<double>>& A,
                                      const std::vector<double>& b) {
  const int rows = static_cast<int>(A.size());
  const int d = static_cast<int>(A.front().size());
  std::vector<double> x(static_cast<std::size_t>(d), 0.0);
  std::vector<bool> passive(static_cast<std::size_t>(d), false);

  // unconstrained least squares restricted to the passive set, via normal
  // equations with partial pivoting and iterative refinement (the normal
  // equations square the conditioning; refinement wins the accuracy back)
  auto solve_passive = [&](std::vector<double>& z) {
    std::vector<int> idx;
    for (int j = 0; j < d; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    const int k = static_cast<int>(idx.size());

    auto normal_solve = [&](const std::vector<double>& rhs,
                            std::vector<double>& sol) {
      std::vector<std::vector<double>> m(k, std::vector<double>(k + 1, 0.0));
      for (int a = 0; a < k; ++a) {
        for (int c = 0; c < k; ++c) {
          double s = 0.0;
          for (int r = 0; r < rows; ++r)
            s += A[static_cast<std::size_t>(r)][static_cast<std::size_t>(idx[a])] *
                 A[static_cast<std::size_t>(r)][static_cast<std::size_t>(idx[c])];
          m[a][static_cast<std::size_t>(c)] = s;
        }
        double s = 0.0;
        for (int r = 0; r < rows; ++r)
          s += A[static_cast<std::size_t>(r)][static_cast<std::size_t>(idx[a])] *
               rhs[static_cast<std::size_t>(r)];
        m[a][static_cast<std::size_t>(k)] = s;
      }
      for (int c = 0; c < k; ++c) {
        int pivot = c;
        for (int r = c + 1; r < k; ++r)
          if (std::abs(m[r][static_cast<std::size_t>(c)]) >
              std::abs(m[pivot][static_cast<std::size_t>(c)]))
            pivot = r;
        std::swap(m[c], m[pivot]);
        const double diag = m[c][static_cast<std::size_t>(c)];
        if (std::abs(diag) < 1e-300) return false;
        for (int r = c + 1; r < k; ++r) {
          const double f = m[r][static_cast<std::size_t>(c)] / diag;
          for (int cc = c; cc <= k; ++cc)
            m[r][static_cast<std::size_t>(cc)] -= f * m[c][static_cast<std::size_t>(cc)];
        }
      }
      sol.assign(static_cast<std::size_t>(k), 0.0);
      for (int r = k - 1; r >= 0; --r) {
        double s = m[r][static_cast<std::size_t>(k)];
        for (int c = r + 1; c < k; ++c)
          s -= m[r][static_cast<std::size_t>(c)] * sol[static_cast<std::size_t>(c)];
        sol[static_cast<std::size_t>(r)] = s / m[r][static_cast<std::size_t>(r)];
      }
      return true;
    };

    std::vector<double> sol;
    if (!normal_solve(b, sol)) return false;
    for (int pass = 0; pass < 3; ++pass) {
      std::vector<double> resid(b);
      for (int r = 0; r < rows; ++r)
        for (int a = 0; a < k; ++a)
          resid[static_cast<std::size_t>(r)] -=
              A[static_cast<std::size_t>(r)][static_cast<std::size_t>(idx[a])] *
              sol[static_cast<std::size_t>(a)];
      std::vector<double> corr;
      if (!normal_solve(resid, corr)) break;
      for (int a = 0; a < k; ++a)
        sol[static_cast<std::size_t>(a)] += corr[static_cast<std::size_t>(a)];
    }
    z.assign(static_cast<std::size_t>(d), 0.0);
    for (int a = 0; a < k; ++a)
      z[static_cast<std::size_t>(idx[a])] = sol[static_cast<std::size_t>(a)];
    return true;
  };

  for (int outer = 0; outer < 3 * d + 30; ++outer) {
    // gradient of the residual at the current x
    std::vector<double> w(static_cast<std::size_t>(d), 0.0);
    std::vector<double> resid(b);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < d; ++j)
        resid[static_cast<std::size_t>(r)] -=
            A[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] *
            x[static_cast<std::size_t>(j)];
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int r = 0; r < rows; ++r)
        s += A[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] *
             resid[static_cast<std::size_t>(r)];
      w[static_cast<std::size_t>(j)] = s;
    }
    int best = -1;
    double best_w = 1e-12;
    for (int j = 0; j < d; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w[static_cast<std::size_t>(j)] > best_w) {
        best_w = w[static_cast<std::size_t>(j)];
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    std::vector<double> z;
    while (true) {
      if (!solve_passive(z)) {
        passive[static_cast<std::size_t>(best)] = false;
        z = x;
        break;
      }
      double alpha = 1.0;
      int blocker = -1;
      for (int j = 0; j < d; ++j)
        if (passive[static_cast<std::size_t>(j)] && z[static_cast<std::size_t>(j)] <= 0.0) {
          const double xj = x[static_cast<std::size_t>(j)];
          const double a = xj / (xj - z[static_cast<std::size_t>(j)]);
          if (a < alpha) {
            alpha = a;
            blocker = j;
          }
        }
      if (blocker < 0) break;
      for (int j = 0; j < d; ++j)
        x[static_cast<std::size_t>(j)] +=
            alpha * (z[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(j)]);
      x[static_cast<std::size_t>(blocker)] = 0.0;
      passive[static_cast<std::size_t>(blocker)] = false;
    }
    x = z;
  }
  return x;
}

// Non-negative least squares fit of (C*L) x = b; if the fit overshoots
// sum(x) = 1, a heavily weighted all-ones row pulls it back to the simplex.
inline std::vector<double> nnls(const TriangularMatrix& M,
                                const std::vector<double>& b) {
  const int d = M.dim();

  // The exact algebraic solution has zero residual, so whenever it already
  // satisfies the constraints it is the constrained optimum; this also
  // sidesteps the active-set solver's sensitivity on near-degenerate
  // systems. Noisy data goes negative and falls through.
  try {
    std::vector<double> exact = solve_upper(M, b);
    double sum = 0.0;
    bool feasible = true;
    for (double v : exact) {
      if (v < -1e-12) feasible = false;
      sum += v;
    }
    if (feasible && sum <= 1.0 + 1e-12) {
      for (double& v : exact) v = std::max(v, 0.0);
      return exact;
    }
  } catch (const singular_matrix_error&) {
  }
  std::vector<std::vector<double>> A(static_cast<std::size_t>(d),
                                     std::vector<double>(static_cast<std::size_t>(d), 0.0));
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c)
      A[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = M.entries[r][c];

  std::vector<double> x = nnls_dense(A, b);
  double sum = 0.0;
  for (double v : x) sum += v;
  if (sum > 1.0 + 1e-12) {
    constexpr double kSumWeight = 1e4;
    A.push_back(std::vector<double>(static_cast<std::size_t>(d), kSumWeight));
    std::vector<double> bb(b);
    bb.push_back(kSumWeight);
    x = nnls_dense(A, bb);
  }
  return x;
}

}  // namespace detail

inline InversionResult invert(const TMDModel& model,
                              const PhotonDistribution& p_meas,
                              InversionMethod method) {
  std::vector<double> x;
  if (method == InversionMethod::TriangularSolve) {
    x = detail::solve_upper(composite_matrix(model), p_meas.probs());
  } else {
    // Outcomes never exceed n_bins, so columns past saturation carry no
    // usable information; restricting the support keeps the least-squares
    // problem well-posed and the extra entries are returned as zero.
    const int d = std::min(model.n_bins, model.n_max) + 1;
    const TMDModel reduced{model.n_bins, model.eta_tmd, d - 1};
    std::vector<double> b(p_meas.probs().begin(), p_meas.probs().begin() + d);
    x = detail::nnls(composite_matrix(reduced), b);
    x.resize(static_cast<std::size_t>(model.n_max) + 1, 0.0);
  }

  InversionResult res;
  double neg = 0.0, sum = 0.0;
  for (double& v : x) {
    if (v < 0.0) {
      neg -= v;
      v = 0.0;
    }
    sum += v;
  }
  res.negative_mass = neg;
  res.negativity_warning = neg > kNegativityTol;
  if (neg > 1e-2)
    throw std::runtime_error("inversion produced " + std::to_string(neg) +
                             " negative probability mass");
  if (sum > 1.0 + 1e-12) {
    for (double& v : x) v /= sum;
    sum = 1.0;
  }
  res.distribution = PhotonDistribution(std::move(x), std::clamp(1.0 - sum, 0.0, 1.0));
  return res;
}

// Condition on a non-vacuum TMD outcome: drop the zero-click entry and
// renormalize over the retained slots.
inline PhotonDistribution filter_vacuum(const PhotonDistribution& p_meas) {
  const double p0 = p_meas[0];
  if (p0 >= 1.0 - 1e-300)
    throw no_signal_error("all slots are vacuum outcomes; nothing to filter");
  std::vector<double> out(p_meas.probs());
  out[0] = 0.0;
  // normalize by the accumulated retained mass rather than 1 - p0 so the
  // result is an exact probability vector even when the retained mass is tiny
  double norm = p_meas.tail_mass();
  for (double v : out) norm += v;
  if (norm <= 0.0)
    throw no_signal_error("all slots are vacuum outcomes; nothing to filter");
  for (double& v : out) v /= norm;
  return PhotonDistribution(std::move(out), p_meas.tail_mass() / norm);
}

// Probability that the TMD registers at least one click. Row 0 of C*L is
// (1-eta)^n, so this is 1 - sum_n (1-eta)^n p(n).
inline double penalty_factor(const TMDModel& model,
                             const PhotonDistribution& p_source) {
  double vac = 0.0;
  double w = 1.0;
  for (int n = 0; n <= std::min(model.n_max, p_source.n_max()); ++n) {
    vac += w * p_source[n];
    w *= 1.0 - model.eta_tmd;
  }
  return std::clamp(1.0 - vac, 0.0, 1.0);
}

// Distribution of the true photon number conditioned on a >= 1 click
// heralding outcome: p_eff(n) = (1 - p(0|n)) p(n) / p_pen.
inline PhotonDistribution effective_filtered_source(
    const TMDModel& model, const PhotonDistribution& p_source) {
  std::vector<double> out(static_cast<std::size_t>(p_source.n_max()) + 1, 0.0);
  double w = 1.0;  // (1-eta)^n
  double sum = 0.0;
  for (int n = 0; n <= p_source.n_max(); ++n) {
    out[static_cast<std::size_t>(n)] = (1.0 - w) * p_source[n];
    sum += out[static_cast<std::size_t>(n)];
    w *= 1.0 - model.eta_tmd;
  }
  // Normalizing by the accumulated sum (not the separately computed penalty
  // factor) keeps the result an exact probability vector even when both are
  // tiny.  Truncated source mass clicks with probability at most 1.
  const double tail = p_source.tail_mass();
  const double norm = sum + tail;
  if (norm <= 0.0)
    throw no_signal_error("penalty factor is zero; TMD never clicks");
  for (double& v : out) v /= norm;
  return PhotonDistribution(std::move(out), tail / norm);
}

}  // namespace qkdsim

#endif  // QKDSIM_TMD_HPP
