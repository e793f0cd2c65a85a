// Yield and error-rate recovery from signal + decoy observations: exact
// truncated linear solve in the many-decoy regime, and conservative
// linear-program bounds (with an Eve-detection alarm) for few decoys.

#ifndef QKDSIM_ESTIMATION_HPP
#define QKDSIM_ESTIMATION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkdsim/lp.hpp"
#include "qkdsim/photon_stats.hpp"

namespace qkdsim {

struct conditioning_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Inconsistent observations; doubles as the PNS/Eve alarm.
struct infeasible_observations_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Observation {
  std::string label;
  PhotonDistribution source;
  double q = 0.0;   // gain
  double eq = 0.0;  // error-weighted gain E*Q
};

using ObservationSet = std::vector<Observation>;

enum class EstimateMode { Exact, LowerY1UpperE1 };

struct YieldEstimate {
  std::vector<double> y;
  std::vector<double> e;
  int n_cut = 0;
  EstimateMode mode = EstimateMode::Exact;
  double clamp_magnitude = 0.0;  // total mass moved by [0,1] clamping
  double condition_estimate = 0.0;
};

constexpr int kDefaultNCut = 9;
constexpr double kConditionLimit = 1e12;

namespace detail {

// Gaussian elimination with partial pivoting; also returns the 1-norm
// condition estimate via the explicit inverse (matrices are tiny).
struct LinearSolve {
  std::vector<double> x;
  double cond = 0.0;
};

inline LinearSolve solve_dense(std::vector<std::vector<double>> a,
                               std::vector<double> b) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;

  double norm_a = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += std::abs(a[i][j]);
    norm_a = std::max(norm_a, col);
  }

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i][k]) > std::abs(a[p][k])) p = i;
    if (std::abs(a[p][k]) < 1e-300)
      return {std::vector<double>(), std::numeric_limits<double>::infinity()};
    std::swap(a[k], a[p]);
    std::swap(b[k], b[p]);
    std::swap(inv[k], inv[p]);
    const double piv = a[k][k];
    for (std::size_t j = 0; j < n; ++j) {
      a[k][j] /= piv;
      inv[k][j] /= piv;
    }
    b[k] /= piv;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      const double f = a[i][k];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a[i][j] -= f * a[k][j];
        inv[i][j] -= f * inv[k][j];
      }
      b[i] -= f * b[k];
    }
  }

  double norm_inv = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += std::abs(inv[i][j]);
    norm_inv = std::max(norm_inv, col);
  }
  return {std::move(b), norm_a * norm_inv};
}

}  // namespace detail

// Solves sum_n Y_n p^k(n) = Q^k for the yields (least squares when
// over-determined), then the error-weighted system for e_n.
inline YieldEstimate solve_exact(const ObservationSet& obs, int n_cut) {
  const std::size_t nv = static_cast<std::size_t>(n_cut) + 1;
  if (obs.size() < nv)
    throw std::invalid_argument("need at least n_cut+1 observations");

  // normal equations M^T M y = M^T q (reduces to the square system when
  // exactly n_cut+1 observations are given)
  std::vector<std::vector<double>> mt(nv, std::vector<double>(obs.size()));
  for (std::size_t k = 0; k < obs.size(); ++k)
    for (std::size_t n = 0; n < nv; ++n)
      mt[n][k] = static_cast<int>(n) <= obs[k].source.n_max()
                     ? obs[k].source[static_cast<int>(n)]
                     : 0.0;

  // Least squares via the normal equations, with iterative refinement
  // against the design matrix to undo the squared conditioning, and the
  // condition estimate mapped back to the design-matrix scale.
  auto normal_solve = [&](auto rhs_of) {
    std::vector<std::vector<double>> gram(nv, std::vector<double>(nv, 0.0));
    for (std::size_t i = 0; i < nv; ++i)
      for (std::size_t j = 0; j < nv; ++j)
        for (std::size_t k = 0; k < obs.size(); ++k)
          gram[i][j] += mt[i][k] * mt[j][k];

    std::vector<double> rhs(obs.size());
    for (std::size_t k = 0; k < obs.size(); ++k) rhs[k] = rhs_of(obs[k]);

    auto project = [&](const std::vector<double>& v) {
      std::vector<double> b(nv, 0.0);
      for (std::size_t i = 0; i < nv; ++i)
        for (std::size_t k = 0; k < obs.size(); ++k) b[i] += mt[i][k] * v[k];
      return b;
    };

    detail::LinearSolve sol = detail::solve_dense(gram, project(rhs));
    sol.cond = std::sqrt(std::max(sol.cond, 1.0));
    if (sol.x.empty() || !(sol.cond < kConditionLimit)) return sol;
    for (int pass = 0; pass < 3; ++pass) {
      std::vector<double> resid(rhs);
      for (std::size_t k = 0; k < obs.size(); ++k)
        for (std::size_t n = 0; n < nv; ++n) resid[k] -= mt[n][k] * sol.x[n];
      const detail::LinearSolve corr = detail::solve_dense(gram, project(resid));
      if (corr.x.empty()) break;
      for (std::size_t n = 0; n < nv; ++n) sol.x[n] += corr.x[n];
    }
    return sol;
  };

  detail::LinearSolve ys = normal_solve([](const Observation& o) { return o.q; });
  if (!(ys.cond < kConditionLimit))
    throw conditioning_error(
        "decoy system condition estimate " + std::to_string(ys.cond) +
        " too large; use more-distinct decoys or a smaller n_cut");
  detail::LinearSolve ws = normal_solve([](const Observation& o) { return o.eq; });

  YieldEstimate est;
  est.mode = EstimateMode::Exact;
  est.n_cut = n_cut;
  est.condition_estimate = ys.cond;
  est.y.assign(nv, 0.0);
  est.e.assign(nv, 0.0);
  for (std::size_t n = 0; n < nv; ++n) {
    const double y = ys.x[n];
    const double clamped = std::clamp(y, 0.0, 1.0);
    est.clamp_magnitude += std::abs(y - clamped);
    est.y[n] = clamped;
    const double en = clamped > 1e-300 ? ws.x[n] / clamped : 0.0;
    const double ec = std::clamp(en, 0.0, 1.0);
    est.clamp_magnitude += std::abs(en - ec);
    est.e[n] = ec;
  }
  return est;
}

// Infimum of Y_1 and supremum of e_1 over all yield/error assignments
// consistent with the observations within +-stat_tol; photon numbers
// above n_cut are worst-cased with Y_n free in [0,1]. Two LPs over
// variables (Y_0..Y_ncut, Z_0..Z_ncut) with Z_n = e_n Y_n.
inline YieldEstimate bound_y1_e1(const ObservationSet& obs, int n_cut,
                                 double stat_tol) {
  if (obs.size() < 2) throw std::invalid_argument("need at least 2 observations");
  if (n_cut < 1) throw std::invalid_argument("n_cut must cover n = 1");
  const std::size_t nv = static_cast<std::size_t>(n_cut) + 1;
  const std::size_t n_lp = 2 * nv;

  std::vector<std::vector<double>> a;
  std::vector<double> b;
  auto add_row = [&](const std::vector<double>& row, double rhs) {
    a.push_back(row);
    b.push_back(rhs);
  };

  for (std::size_t n = 0; n < nv; ++n) {
    std::vector<double> r1(n_lp, 0.0);
    r1[n] = 1.0;  // Y_n <= 1
    add_row(r1, 1.0);
    std::vector<double> r2(n_lp, 0.0);
    r2[nv + n] = 1.0;  // Z_n <= Y_n
    r2[n] = -1.0;
    add_row(r2, 0.0);
  }

  for (const Observation& o : obs) {
    std::vector<double> py(n_lp, 0.0), pz(n_lp, 0.0);
    double head = 0.0;
    for (std::size_t n = 0; n < nv; ++n) {
      const double p = static_cast<int>(n) <= o.source.n_max()
                           ? o.source[static_cast<int>(n)]
                           : 0.0;
      py[n] = p;
      pz[nv + n] = p;
      head += p;
    }
    const double tail = std::max(0.0, 1.0 - head);  // includes tail_mass
    // head-term contribution bracketed by the observation; the tail can
    // contribute anywhere in [0, tail].
    add_row(py, o.q + stat_tol);
    std::vector<double> nyr(n_lp);
    for (std::size_t j = 0; j < n_lp; ++j) nyr[j] = -py[j];
    add_row(nyr, -(o.q - stat_tol - tail));
    add_row(pz, o.eq + stat_tol);
    std::vector<double> nzr(n_lp);
    for (std::size_t j = 0; j < n_lp; ++j) nzr[j] = -pz[j];
    add_row(nzr, -(o.eq - stat_tol - tail));
  }

  std::vector<double> c_min_y1(n_lp, 0.0);
  c_min_y1[1] = -1.0;  // maximize -Y_1
  const LpResult lo = solve_lp(a, b, c_min_y1);
  if (lo.status == LpStatus::Infeasible)
    throw infeasible_observations_error(
        "observations are mutually inconsistent: possible PNS attack");
  if (lo.status != LpStatus::Optimal)
    throw std::runtime_error("yield LP did not reach an optimum");

  std::vector<double> c_max_z1(n_lp, 0.0);
  c_max_z1[nv + 1] = 1.0;
  const LpResult hi = solve_lp(a, b, c_max_z1);
  if (hi.status == LpStatus::Infeasible)
    throw infeasible_observations_error(
        "observations are mutually inconsistent: possible PNS attack");
  if (hi.status != LpStatus::Optimal)
    throw std::runtime_error("error LP did not reach an optimum");

  YieldEstimate est;
  est.mode = EstimateMode::LowerY1UpperE1;
  est.n_cut = n_cut;
  est.y.assign(nv, 0.0);
  est.e.assign(nv, 1.0);
  const double y1_lb = std::clamp(-lo.objective, 0.0, 1.0);
  const double z1_ub = std::clamp(hi.objective, 0.0, 1.0);
  est.y[1] = y1_lb;
  est.e[1] = y1_lb > 0.0 ? std::min(1.0, z1_ub / y1_lb) : 1.0;
  return est;
}

struct Q1E1 {
  double q1 = 0.0;
  double e1 = 0.0;
};

inline Q1E1 q1_e1_from_estimate(const YieldEstimate& est,
                                const PhotonDistribution& p_signal) {
  if (est.y.size() < 2) throw std::invalid_argument("estimate does not cover n = 1");
  return {est.y[1] * p_signal[1], est.e[1]};
}

}  // namespace qkdsim

#endif  // QKDSIM_ESTIMATION_HPP
