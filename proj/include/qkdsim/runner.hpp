// Sweep orchestration: CSV output, summary lines, gnuplot variant, and
// the Monte Carlo session pipeline with record/replay.

#ifndef QKDSIM_RUNNER_HPP
#define QKDSIM_RUNNER_HPP

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qkdsim/config.hpp"
#include "qkdsim/keyrate.hpp"
#include "qkdsim/passive_decoy.hpp"

namespace qkdsim {

struct RunOptions {
  bool summary_only = false;
  bool gnuplot = false;
  std::string record_path;
  std::string replay_path;
};

inline std::string mode_string(const RunConfig& cfg) {
  std::string s = cfg.source == SourceKind::Poissonian  ? "poissonian"
                  : cfg.source == SourceKind::Thermal   ? "thermal"
                                                        : "singlephoton";
  s += cfg.filtered ? "-filt" : "-unf";
  s += cfg.locc == 2 ? "-2locc" : "-1locc";
  if (cfg.montecarlo) s += "-mc";
  else s += cfg.estimation == EstimationKind::Exact ? "-exact" : "-bounds";
  return s;
}

inline int worker_count() {
  unsigned n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("QKD_SIM_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1 && static_cast<unsigned>(cap) < n) n = static_cast<unsigned>(cap);
  }
  return static_cast<int>(n);
}

inline std::vector<double> make_grid(const RunConfig& cfg) {
  std::vector<double> grid;
  const double span = cfg.l_end - cfg.l_start;
  const int steps = static_cast<int>(span / cfg.l_step + 1e-9);
  for (int i = 0; i <= steps; ++i) grid.push_back(cfg.l_start + i * cfg.l_step);
  return grid;
}

// Rows are computed in parallel but stored by grid index, so the output
// order and content never depend on scheduling.
inline std::vector<RatePoint> parallel_sweep(const SweepContext& ctx,
                                             const std::vector<double>& grid) {
  std::vector<RatePoint> rows(grid.size());
  const int workers = std::min<int>(worker_count(), static_cast<int>(grid.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) rows[i] = evaluate_point(ctx, grid[i]);
    return rows;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < grid.size();
           i += static_cast<std::size_t>(workers))
        rows[i] = evaluate_point(ctx, grid[i]);
    });
  for (auto& t : pool) t.join();
  return rows;
}

namespace detail {

// True photon-number distribution of the slots a subset retains: the
// per-outcome retention fractions reweight the joint (n, outcome) law.
inline PhotonDistribution subset_true_distribution(
    const SessionRecord& session, const SessionRecord& subset,
    const TMDModel& tmd, const PhotonDistribution& truth) {
  const TriangularMatrix M = composite_matrix(tmd);
  const int d = tmd.n_max + 1;
  std::vector<double> keep(static_cast<std::size_t>(d), 0.0);
  for (int m = 0; m < d; ++m)
    keep[static_cast<std::size_t>(m)] =
        session.counts[static_cast<std::size_t>(m)] > 0
            ? static_cast<double>(subset.counts[static_cast<std::size_t>(m)]) /
                  static_cast<double>(session.counts[static_cast<std::size_t>(m)])
            : 0.0;
  std::vector<double> p(static_cast<std::size_t>(d), 0.0);
  double norm = 0.0;
  for (int n = 0; n < d; ++n) {
    double w = 0.0;
    for (int m = 0; m <= n; ++m) w += keep[static_cast<std::size_t>(m)] * M.entries[m][n];
    p[static_cast<std::size_t>(n)] = w * truth[n];
    norm += p[static_cast<std::size_t>(n)];
  }
  if (norm <= 0.0) throw no_signal_error("subset retains no slots");
  for (double& v : p) v /= norm;
  double s = 0.0;
  for (double v : p) s += v;
  return PhotonDistribution(std::move(p), std::clamp(1.0 - s, 0.0, 1.0));
}

}  // namespace detail

// Finite-session pipeline: simulate (or replay) a session, derive decoy
// subsets passively, invert them, and feed bound-mode estimation.
inline std::vector<RatePoint> montecarlo_sweep(const RunConfig& cfg,
                                               const RunOptions& opt,
                                               const std::vector<double>& grid) {
  const TMDModel tmd{cfg.n_bins, cfg.eta_tmd, cfg.n_max};
  const ChannelModel channel{cfg.alpha, cfg.eta_bob, cfg.y0, cfg.e_det};
  const PhotonDistribution source = make_source({cfg.source, cfg.chi}, cfg.n_max);

  SessionRecord session;
  if (!opt.replay_path.empty()) {
    std::ifstream in(opt.replay_path);
    if (!in) throw std::runtime_error("cannot open replay file: " + opt.replay_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    session = session_from_text(buf.str());
    session.counts.resize(static_cast<std::size_t>(cfg.n_max) + 1, 0);
  } else {
    session = simulate_session(source, tmd, cfg.n_total, cfg.seed, worker_count());
  }
  if (!opt.record_path.empty()) {
    std::ofstream out(opt.record_path);
    if (!out) throw std::runtime_error("cannot open record file: " + opt.record_path);
    out << to_text(session);
  }

  const PhotonDistribution truth = session.source_truth.value_or(source);
  const PhotonDistribution inverted_session = subset_source_distribution(
      session, tmd, InversionMethod::ConstrainedLeastSquares);

  // The LP sees each subset as the retention-reweighted conditional of the
  // session-level inverted distribution (Alice knows her per-outcome
  // retention fractions); inverting each subset histogram on its own would
  // bias the decoy statistics, because conditioning on outcomes does not
  // commute with the inversion.
  ObservationSet base_obs;
  std::vector<PhotonDistribution> true_dists;
  const auto plans = make_standard_plans(session, cfg.m_subset, cfg.delta_scale);
  for (const DecoyPlan& plan : plans) {
    const auto [decoy, signal] = select_decoy_subset(session, plan, cfg.seed ^ 0x9e37ULL);
    base_obs.push_back(
        {plan.label,
         detail::subset_true_distribution(session, decoy, tmd, inverted_session),
         0.0, 0.0});
    true_dists.push_back(detail::subset_true_distribution(session, decoy, tmd, truth));
  }
  base_obs.push_back({"signal", inverted_session, 0.0, 0.0});
  true_dists.push_back(truth);

  PhotonDistribution p_signal = inverted_session;
  double p_pen = 1.0;
  if (cfg.filtered) {
    p_pen = penalty_factor(tmd, inverted_session);
    p_signal = effective_filtered_source(tmd, inverted_session);
  }

  std::vector<RatePoint> rows;
  rows.reserve(grid.size());
  for (double l : grid) {
    ObservationSet obs = base_obs;
    for (std::size_t k = 0; k < obs.size(); ++k) {
      // Bob's asymptotic observables for the slots of this subset
      const GainQber g = gain_and_qber(channel, l, true_dists[k]);
      obs[k].q = g.q_chi;
      obs[k].eq = g.e_chi * g.q_chi;
    }

    RateInputs in;
    in.f_ec = cfg.f_ec;
    in.p_pen = p_pen;
    // filtered pipelines score the rate on the vacuum-conditioned ensemble
    const GainQber eff = cfg.filtered
                             ? gain_and_qber(channel, l,
                                             effective_filtered_source(tmd, truth))
                             : gain_and_qber(channel, l, truth);
    in.q_chi = eff.q_chi;
    in.e_chi = eff.e_chi;

    const YieldEstimate est = bound_y1_e1(obs, kDefaultNCut, cfg.stat_tol);
    const Q1E1 qe = q1_e1_from_estimate(est, p_signal);
    in.q1 = qe.q1;
    in.e1 = qe.e1;

    RatePoint pt;
    pt.l_km = l;
    pt.chi_opt = cfg.chi;
    pt.p_pen = p_pen;
    pt.q_chi = in.q_chi;
    pt.e_chi = in.e_chi;
    pt.q1 = in.q1;
    pt.e1 = in.e1;
    if (cfg.locc == 1) {
      pt.rate = rate_1locc(in);
    } else {
      BStepState st = seed_bstep_state(in);
      pt.rate = rate_2locc(in, st);
      for (int k = 1; k <= kMaxBSteps; ++k) {
        st = bstep(st);
        const double r = rate_2locc(in, st);
        if (r > pt.rate) {
          pt.rate = r;
          pt.bsteps = k;
        }
      }
    }
    rows.push_back(pt);
  }
  return rows;
}

inline void write_csv(const RunConfig& cfg, const std::vector<RatePoint>& rows,
                      std::ostream& os) {
  os << "l_km,chi_opt,bsteps,rate,Q_chi,E_chi,Q1,e1,p_pen,mode\n";
  const std::string mode = mode_string(cfg);
  for (const RatePoint& r : rows)
    os << format_number(r.l_km) << ',' << format_number(r.chi_opt) << ','
       << r.bsteps << ',' << format_number(r.rate) << ','
       << format_number(r.q_chi) << ',' << format_number(r.e_chi) << ','
       << format_number(r.q1) << ',' << format_number(r.e1) << ','
       << format_number(r.p_pen) << ',' << mode << '\n';
}

inline int run(const RunConfig& cfg, const RunOptions& opt,
               std::ostream& summary = std::cout) {
  try {
    validate_config(cfg);
  } catch (const config_error& e) {
    summary << "config error: " << e.what() << "\n";
    return 1;
  }

  try {
    const std::vector<double> grid = make_grid(cfg);
    std::vector<RatePoint> rows;
    if (cfg.montecarlo) {
      rows = montecarlo_sweep(cfg, opt, grid);
    } else if (!opt.summary_only) {
      rows = parallel_sweep(cfg.context(), grid);
    }

    if (!opt.summary_only) {
      std::ofstream out(cfg.out);
      if (!out) throw std::runtime_error("cannot open output file: " + cfg.out);
      write_csv(cfg, rows, out);
      if (opt.gnuplot) {
        std::ofstream gp(cfg.out + "." + mode_string(cfg) + ".dat");
        for (const RatePoint& r : rows)
          gp << format_number(r.l_km) << ' ' << format_number(r.rate) << '\n';
      }
    }

    if (cfg.montecarlo) {
      double last_positive = 0.0;
      for (const RatePoint& r : rows)
        if (r.rate > kRateFloor) last_positive = r.l_km;
      summary << "max secure distance: " << format_number(last_positive)
              << " km (grid resolution)\n";
    } else {
      summary << "max secure distance: "
              << format_number(max_secure_distance(cfg.context())) << " km\n";
    }
    const ChannelModel ch{cfg.alpha, cfg.eta_bob, cfg.y0, cfg.e_det};
    if (const auto limit = intercept_resend_limit(ch))
      summary << "intercept-resend limit: " << format_number(*limit) << " km\n";
    else
      summary << "intercept-resend limit: unbounded\n";
    return 0;
  } catch (const config_error& e) {
    summary << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    summary << "numerical failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace qkdsim

#endif  // QKDSIM_RUNNER_HPP
