// Secure-key-rate lower bounds: 1-LOCC rate with the filtering penalty,
// 2-LOCC rates via parity-pair B-steps, chi optimization, distance
// sweeps, and the intercept-resend upper-bound distance.

#ifndef QKDSIM_KEYRATE_HPP
#define QKDSIM_KEYRATE_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkdsim/channel.hpp"
#include "qkdsim/estimation.hpp"
#include "qkdsim/photon_stats.hpp"
#include "qkdsim/tmd.hpp"

namespace qkdsim {

inline double h2(double x) {
  if (x < 0.0 || x > 1.0) throw std::domain_error("h2 argument outside [0,1]");
  if (x == 0.0 || x == 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

struct RateInputs {
  double q = 1.0;        // sifting factor; ~1 in the asymptotic limit
  double q_chi = 0.0;
  double e_chi = 0.0;
  double q1 = 0.0;
  double e1 = 0.0;
  double p_pen = 1.0;
  double f_ec = 1.22;    // error-correction inefficiency
};

// No key is extractable from the single-photon fraction once its error
// estimate reaches 1/2.
inline double privacy_term(double e) {
  return e >= 0.5 ? 0.0 : 1.0 - h2(e);
}

inline double rate_1locc(const RateInputs& in) {
  const double s_prime =
      in.q * (-in.q_chi * in.f_ec * h2(std::min(in.e_chi, 0.5)) +
              in.q1 * privacy_term(in.e1));
  return s_prime > 0.0 ? in.p_pen * s_prime : 0.0;
}

constexpr int kMaxBSteps = 4;

struct BStepState {
  double bit_err = 0.0;      // E'_chi
  double phase_err_1 = 0.0;  // e'_{1,p}
  double omega = 0.0;        // single-photon fraction among survivors
  double survival = 1.0;     // cumulative pair-survival product
  int rounds = 0;
};

inline BStepState seed_bstep_state(const RateInputs& in) {
  BStepState st;
  st.bit_err = std::min(in.e_chi, 0.5);
  st.phase_err_1 = std::min(in.e1, 0.5);
  st.omega = in.q_chi > 0.0 ? std::min(1.0, in.q1 / in.q_chi) : 0.0;
  return st;
}

// One parity-comparison round on random bit pairs. A pair survives when
// parities agree; the kept bit has error b^2/s. Phase errors spread as
// 2p(1-p). The single-photon fraction needs both pair members untagged;
// dividing the omega^2 pair fraction by the overall survival is valid as
// a lower bound because untagged bits err at most as often as the
// average bit (e_1 <= E <= 1/2).
inline BStepState bstep(const BStepState& state) {
  if (state.rounds >= kMaxBSteps)
    throw std::invalid_argument("at most 4 B-steps are supported");
  const double b = state.bit_err;
  const double s = (1.0 - b) * (1.0 - b) + b * b;
  BStepState next = state;
  next.bit_err = s > 0.0 ? b * b / s : 0.0;
  next.phase_err_1 = std::min(0.5, 2.0 * state.phase_err_1 * (1.0 - state.phase_err_1));
  next.omega = std::min(1.0, state.omega * state.omega / s);
  next.survival = state.survival * s;
  next.rounds = state.rounds + 1;
  return next;
}

// Each round halves the bit budget (one kept bit per surviving pair);
// the (1/2)^rounds factor lives here so that zero rounds reduce exactly
// to the 1-LOCC rate.
inline double rate_2locc(const RateInputs& in, const BStepState& state) {
  const double budget = std::pow(0.5, state.rounds) * state.survival;
  const double s_prime =
      in.q * in.q_chi * budget *
      (-in.f_ec * h2(state.bit_err) + state.omega * privacy_term(state.phase_err_1));
  return s_prime > 0.0 ? in.p_pen * s_prime : 0.0;
}

enum class EstimationKind { Exact, Bounds };

// Everything fixed across a sweep: source family, channel, detector, and
// post-processing mode.
struct SweepContext {
  SourceKind source_kind = SourceKind::Poissonian;
  bool chi_auto = true;
  double chi = 0.1;           // used when chi_auto is false
  ChannelModel channel;
  TMDModel tmd;
  bool filtered = false;
  int locc = 1;
  EstimationKind estimation = EstimationKind::Exact;
  double q = 1.0;
  double f_ec = 1.22;
  double decoy_tilt = 0.1;    // synthetic decoy chi tilt for bounds mode
  double stat_tol = 0.0;
  int n_cut = kDefaultNCut;
};

struct RatePoint {
  double l_km = 0.0;
  double chi_opt = 0.0;
  int bsteps = 0;
  double rate = 0.0;
  double q_chi = 0.0;
  double e_chi = 0.0;
  double q1 = 0.0;
  double e1 = 0.0;
  double p_pen = 1.0;
};

constexpr double kRateFloor = 1e-12;

namespace detail {

struct ChiEval {
  double rate = 0.0;
  int bsteps = 0;
  RateInputs inputs;
};

inline ChiEval evaluate_chi(const SweepContext& ctx, double l_km, double chi) {
  RateInputs in;
  in.q = ctx.q;
  in.f_ec = ctx.f_ec;

  PhotonDistribution p_signal = [&] {
    if (ctx.source_kind == SourceKind::SinglePhoton)
      return make_source({SourceKind::SinglePhoton, 0.0}, ctx.tmd.n_max);
    const PhotonDistribution raw =
        make_source({ctx.source_kind, chi}, ctx.tmd.n_max);
    if (!ctx.filtered) return raw;
    in.p_pen = penalty_factor(ctx.tmd, raw);
    return effective_filtered_source(ctx.tmd, raw);
  }();

  const GainQber gq = gain_and_qber(ctx.channel, l_km, p_signal);
  in.q_chi = gq.q_chi;
  in.e_chi = gq.e_chi;

  const double eta = transmittance(ctx.channel, l_km);
  if (ctx.estimation == EstimationKind::Exact ||
      ctx.source_kind == SourceKind::SinglePhoton) {
    // infinite-decoy limit: per-photon-number yields are known exactly
    in.q1 = yield_n(ctx.channel, eta, 1) * p_signal[1];
    in.e1 = error_n(ctx.channel, eta, 1);
  } else {
    // synthetic finite-decoy path: vacuum + signal + two chi tilts
    ObservationSet obs;
    auto add = [&](const std::string& label, const PhotonDistribution& d) {
      const GainQber g = gain_and_qber(ctx.channel, l_km, d);
      obs.push_back({label, d, g.q_chi, g.e_chi * g.q_chi});
    };
    add("vacuum", PhotonDistribution::vacuum(ctx.tmd.n_max));
    add("signal", p_signal);
    const double up = std::min(0.5, chi * (1.0 + ctx.decoy_tilt));
    const double down = chi * (1.0 - ctx.decoy_tilt);
    auto decoy_dist = [&](double c) {
      const PhotonDistribution raw = make_source({ctx.source_kind, c}, ctx.tmd.n_max);
      return ctx.filtered ? effective_filtered_source(ctx.tmd, raw) : raw;
    };
    add("tilt-up", decoy_dist(up));
    add("tilt-down", decoy_dist(down));
    const YieldEstimate est = bound_y1_e1(obs, ctx.n_cut, ctx.stat_tol);
    const Q1E1 qe = q1_e1_from_estimate(est, p_signal);
    in.q1 = qe.q1;
    in.e1 = qe.e1;
  }

  ChiEval ev;
  ev.inputs = in;
  if (ctx.locc == 1) {
    ev.rate = rate_1locc(in);
    ev.bsteps = 0;
  } else {
    BStepState st = seed_bstep_state(in);
    ev.rate = rate_2locc(in, st);
    ev.bsteps = 0;
    for (int k = 1; k <= kMaxBSteps; ++k) {
      st = bstep(st);
      const double r = rate_2locc(in, st);
      if (r > ev.rate) {
        ev.rate = r;
        ev.bsteps = k;
      }
    }
  }
  return ev;
}

}  // namespace detail

struct ChiOptimum {
  double chi_opt = 0.0;
  double rate = 0.0;
  int bsteps = 0;
};

// The optimizer searches the open interval (0, 0.5) from above the lower
// edge of the practical intensity window: 0.15 as the squeezing parameter
// for the PDC/thermal source and 0.15 as the mean photon number for the
// Poissonian source (chi = asinh(sqrt(mu))).
constexpr double kChiSearchMax = 0.4999;
inline double chi_search_min(SourceKind kind) {
  return kind == SourceKind::Poissonian ? std::asinh(std::sqrt(0.15)) : 0.15;
}

// Coarse grid over the search window followed by golden-section refinement.
inline ChiOptimum optimize_chi(const SweepContext& ctx, double l_km) {
  if (ctx.source_kind == SourceKind::SinglePhoton || !ctx.chi_auto) {
    const double chi = ctx.source_kind == SourceKind::SinglePhoton ? 0.0 : ctx.chi;
    const detail::ChiEval ev = detail::evaluate_chi(ctx, l_km, ctx.chi_auto ? 0.1 : chi);
    return {chi, ev.rate, ev.bsteps};
  }

  const double chi_min = chi_search_min(ctx.source_kind);
  const double step = (kChiSearchMax - chi_min) / 49.0;
  constexpr int kCoarse = 50;
  double best_chi = 0.0, best_rate = -1.0;
  for (int i = 0; i < kCoarse; ++i) {
    const double chi = chi_min + step * i;
    const double r = detail::evaluate_chi(ctx, l_km, chi).rate;
    if (r > best_rate) {
      best_rate = r;
      best_chi = chi;
    }
  }

  double lo = std::max(chi_min, best_chi - step);
  double hi = std::min(kChiSearchMax, best_chi + step);
  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = detail::evaluate_chi(ctx, l_km, x1).rate;
  double f2 = detail::evaluate_chi(ctx, l_km, x2).rate;
  while (hi - lo > 1e-4) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = detail::evaluate_chi(ctx, l_km, x2).rate;
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = detail::evaluate_chi(ctx, l_km, x1).rate;
    }
  }
  const double chi = 0.5 * (lo + hi);
  const detail::ChiEval ev = detail::evaluate_chi(ctx, l_km, chi);
  if (ev.rate >= best_rate) return {chi, ev.rate, ev.bsteps};
  const detail::ChiEval coarse = detail::evaluate_chi(ctx, l_km, best_chi);
  return {best_chi, coarse.rate, coarse.bsteps};
}

inline RatePoint evaluate_point(const SweepContext& ctx, double l_km) {
  const ChiOptimum opt = optimize_chi(ctx, l_km);
  const double chi_eval = ctx.source_kind == SourceKind::SinglePhoton
                              ? 0.1  // ignored by evaluate_chi
                              : (ctx.chi_auto ? opt.chi_opt : ctx.chi);
  const detail::ChiEval ev = detail::evaluate_chi(ctx, l_km, chi_eval);
  RatePoint pt;
  pt.l_km = l_km;
  pt.chi_opt = opt.chi_opt;
  pt.bsteps = opt.bsteps;
  pt.rate = opt.rate;
  pt.q_chi = ev.inputs.q_chi;
  pt.e_chi = ev.inputs.e_chi;
  pt.q1 = ev.inputs.q1;
  pt.e1 = ev.inputs.e1;
  pt.p_pen = ev.inputs.p_pen;
  return pt;
}

// Largest distance with an optimized rate above the floor, bracketed by a
// coarse outward scan and narrowed by bisection to 0.05 km.
inline double max_secure_distance(const SweepContext& ctx) {
  auto rate_at = [&](double l) { return optimize_chi(ctx, l).rate; };
  if (rate_at(0.0) <= kRateFloor)
    throw std::runtime_error("zero rate at l = 0: degenerate configuration");

  double lo = 0.0, hi = 0.0;
  constexpr double kStep = 10.0;
  for (double l = kStep; l <= 1000.0; l += kStep) {
    if (rate_at(l) <= kRateFloor) {
      hi = l;
      break;
    }
    lo = l;
  }
  if (hi == 0.0) throw std::runtime_error("rate still positive at 1000 km");
  while (hi - lo > 0.05) {
    const double mid = 0.5 * (lo + hi);
    (rate_at(mid) > kRateFloor ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Distance at which the single-photon QBER curve reaches the 25%
// intercept-resend threshold. nullopt when the QBER saturates below it.
inline std::optional<double> intercept_resend_limit(const ChannelModel& channel) {
  auto qber = [&](double l) {
    const double eta = transmittance(channel, l);
    const double y1 = yield_n(channel, eta, 1);
    // once eta underflows the QBER limit is e0 with dark counts, e_det without
    if (y1 <= 0.0) return channel.y0 > 0.0 ? ChannelModel::e0 : channel.e_det;
    return (ChannelModel::e0 * channel.y0 + channel.e_det * eta) / y1;
  };
  constexpr double kThreshold = 0.25;
  if (qber(0.0) >= kThreshold) return 0.0;
  if (qber(10000.0) < kThreshold) return std::nullopt;
  double lo = 0.0, hi = 10000.0;
  while (hi - lo > 0.05) {
    const double mid = 0.5 * (lo + hi);
    (qber(mid) < kThreshold ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline std::vector<RatePoint> sweep(const SweepContext& ctx,
                                    const std::vector<double>& l_grid) {
  if (l_grid.empty()) throw std::invalid_argument("empty distance grid");
  std::vector<RatePoint> out;
  out.reserve(l_grid.size());
  for (double l : l_grid) out.push_back(evaluate_point(ctx, l));
  return out;
}

}  // namespace qkdsim

#endif  // QKDSIM_KEYRATE_HPP
