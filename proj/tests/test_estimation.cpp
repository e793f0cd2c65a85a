#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "qkdsim/channel.hpp"
#include "qkdsim/estimation.hpp"
#include "qkdsim/tmd.hpp"

using namespace qkdsim;

namespace {

const ChannelModel gys{};

Observation observe(const std::string& label, const PhotonDistribution& d,
                    double l_km, const ChannelModel& c = gys) {
  const GainQber gq = gain_and_qber(c, l_km, d);
  return {label, d, gq.q_chi, gq.e_chi * gq.q_chi};
}

// Remove the known channel-model contribution of photon numbers above
// n_cut, mirroring the documented tail treatment for exact-mode solving.
void subtract_tail(Observation& o, double l_km, int n_cut) {
  const double eta = transmittance(gys, l_km);
  for (int n = n_cut + 1; n <= o.source.n_max(); ++n) {
    const double yn = yield_n(gys, eta, n);
    o.q -= o.source[n] * yn;
    o.eq -= o.source[n] * yn * error_n(gys, eta, n);
  }
}

// A spread of chi values gives well-separated photon-number statistics.
// n_cut >= 0 subtracts the known tail (exact-mode synthesis).
ObservationSet synthesize(double l_km, int count,
                          SourceKind kind = SourceKind::Poissonian,
                          int n_cut = -1) {
  ObservationSet obs;
  obs.push_back(observe("vacuum", PhotonDistribution::vacuum(20), l_km));
  for (int i = 1; i < count; ++i) {
    const double chi = 0.05 + 0.45 * i / (count - 1);
    obs.push_back(observe("chi" + std::to_string(i), make_source({kind, chi}, 20), l_km));
  }
  if (n_cut >= 0)
    for (Observation& o : obs) subtract_tail(o, l_km, n_cut);
  return obs;
}

}  // namespace

TEST_CASE("solve_exact recovers the channel yields and error rates") {
  const double l = 50.0;
  const int n_cut = 6;
  const ObservationSet obs = synthesize(l, n_cut + 1, SourceKind::Poissonian, n_cut);
  const YieldEstimate est = solve_exact(obs, n_cut);
  const double eta = transmittance(gys, l);
  for (int n = 0; n <= n_cut; ++n) {
    CHECK(est.y[static_cast<std::size_t>(n)] ==
          Catch::Approx(yield_n(gys, eta, n)).margin(1e-8));
    CHECK(est.e[static_cast<std::size_t>(n)] ==
          Catch::Approx(error_n(gys, eta, n)).margin(1e-8));
  }
}

TEST_CASE("solve_exact with a single vacuum observation pins Y0") {
  ObservationSet obs{observe("vacuum", PhotonDistribution::vacuum(20), 30.0)};
  const YieldEstimate est = solve_exact(obs, 0);
  CHECK(est.y[0] == Catch::Approx(gys.y0).epsilon(1e-10));
}

TEST_CASE("three decoys tilted +-10 percent recover Y1 to 1e-6 relative") {
  const double l = 50.0;
  const double chi = 0.3;
  const int n_cut = 2;
  // the synthesizer assigns channel-model yields to n > n_cut and removes
  // that known tail contribution from the observed gains
  auto observe_cut = [&](const std::string& label, const PhotonDistribution& d) {
    Observation o = observe(label, d, l);
    const double eta = transmittance(gys, l);
    for (int n = n_cut + 1; n <= d.n_max(); ++n) {
      const double yn = yield_n(gys, eta, n);
      o.q -= d[n] * yn;
      o.eq -= d[n] * yn * error_n(gys, eta, n);
    }
    return o;
  };
  ObservationSet obs;
  obs.push_back(observe_cut("signal", make_source({SourceKind::Poissonian, chi}, 20)));
  obs.push_back(observe_cut("up", make_source({SourceKind::Poissonian, chi * 1.1}, 20)));
  obs.push_back(observe_cut("down", make_source({SourceKind::Poissonian, chi * 0.9}, 20)));
  const YieldEstimate est = solve_exact(obs, n_cut);
  const double y1_true = yield_n(gys, transmittance(gys, l), 1);
  CHECK(est.y[1] == Catch::Approx(y1_true).epsilon(1e-6));
}

TEST_CASE("nearly identical decoys trip the conditioning guard") {
  const double l = 20.0;
  ObservationSet obs;
  for (int i = 0; i < 8; ++i)
    obs.push_back(observe("same" + std::to_string(i),
                          make_source({SourceKind::Poissonian, 0.3 + 1e-13 * i}, 20), l));
  CHECK_THROWS_AS(solve_exact(obs, 7), conditioning_error);
}

TEST_CASE("bound mode sandwiches the true Y1 and e1 on the scenario grid") {
  const TMDModel tmd{8, 0.5, 20};
  for (const double l : {0.0, 50.0, 100.0, 150.0}) {
    for (const SourceKind kind : {SourceKind::Poissonian, SourceKind::Thermal}) {
      for (const bool filtered : {false, true}) {
        auto dist = [&](double chi) {
          const PhotonDistribution raw = make_source({kind, chi}, 20);
          return filtered ? effective_filtered_source(tmd, raw) : raw;
        };
        ObservationSet obs;
        obs.push_back(observe("vacuum", PhotonDistribution::vacuum(20), l));
        obs.push_back(observe("signal", dist(0.3), l));
        obs.push_back(observe("up", dist(0.33), l));
        obs.push_back(observe("down", dist(0.27), l));
        const YieldEstimate est = bound_y1_e1(obs, 9, 0.0);
        const double eta = transmittance(gys, l);
        const double y1_true = yield_n(gys, eta, 1);
        const double e1_true = error_n(gys, eta, 1);
        CHECK(est.y[1] <= y1_true + 1e-9);
        CHECK(est.e[1] >= e1_true - 1e-9);
      }
    }
  }
}

TEST_CASE("bound gaps shrink as the decoy count grows") {
  const double l = 50.0;
  const double y1_true = yield_n(gys, transmittance(gys, l), 1);
  double prev_gap = 1.0;
  for (const int count : {3, 5, 9}) {
    const YieldEstimate est = bound_y1_e1(synthesize(l, count), 9, 0.0);
    const double gap = y1_true - est.y[1];
    CHECK(gap >= -1e-9);
    CHECK(gap <= prev_gap + 1e-9);
    prev_gap = gap;
  }
  CHECK(prev_gap < 0.05 * y1_true);
}

TEST_CASE("a PNS-style yield perturbation raises the alarm") {
  const double l = 80.0;
  ObservationSet obs = synthesize(l, 6);
  // Eve halves the single-photon yield of the signal entry only and hides
  // the loss by re-scaling its gain; the joint system becomes inconsistent.
  const double eta = transmittance(gys, l);
  Observation& signal = obs[3];
  const double y1 = yield_n(gys, eta, 1);
  signal.q -= 0.5 * y1 * signal.source[1];
  bool alarmed = false;
  try {
    const YieldEstimate est = bound_y1_e1(obs, 9, 0.0);
    // if still feasible, the Y1 bound must have collapsed
    alarmed = est.y[1] < 0.6 * y1;
  } catch (const infeasible_observations_error&) {
    alarmed = true;
  }
  CHECK(alarmed);
}

TEST_CASE("vacuum decoy alone cannot bound Y1 away from zero") {
  ObservationSet obs;
  obs.push_back(observe("vacuum", PhotonDistribution::vacuum(20), 40.0));
  obs.push_back(observe("vacuum2", PhotonDistribution::vacuum(20), 40.0));
  const YieldEstimate est = bound_y1_e1(obs, 9, 0.0);
  CHECK(est.y[1] == Catch::Approx(0.0).margin(1e-9));
  CHECK(est.e[1] == 1.0);
}

TEST_CASE("enlarging stat_tol never tightens the bounds") {
  const ObservationSet obs = synthesize(60.0, 5);
  double prev_y1 = 1.0;
  double prev_e1 = 0.0;
  for (const double tol : {0.0, 1e-8, 1e-6, 1e-4}) {
    const YieldEstimate est = bound_y1_e1(obs, 9, tol);
    CHECK(est.y[1] <= prev_y1 + 1e-12);
    CHECK(est.e[1] >= prev_e1 - 1e-12);
    prev_y1 = est.y[1];
    prev_e1 = est.e[1];
  }
}

TEST_CASE("exact-mode recovery degrades no faster than the condition estimate") {
  const double l = 40.0;
  const ObservationSet base = synthesize(l, 5, SourceKind::Poissonian, 4);
  const YieldEstimate clean = solve_exact(base, 4);
  const double eps = 1e-9;
  ObservationSet noisy = base;
  for (Observation& o : noisy) o.q += eps;
  const YieldEstimate est = solve_exact(noisy, 4);
  for (int n = 0; n <= 4; ++n)
    CHECK(std::abs(est.y[static_cast<std::size_t>(n)] -
                   clean.y[static_cast<std::size_t>(n)]) <=
          clean.condition_estimate * eps * 10.0);
}

TEST_CASE("q1_e1_from_estimate") {
  const double l = 50.0;
  const ObservationSet obs = synthesize(l, 7, SourceKind::Poissonian, 6);
  const YieldEstimate exact = solve_exact(obs, 6);
  const PhotonDistribution signal = make_source({SourceKind::Poissonian, 0.3}, 20);
  const Q1E1 qe = q1_e1_from_estimate(exact, signal);
  const double eta = transmittance(gys, l);
  CHECK(qe.q1 == Catch::Approx(yield_n(gys, eta, 1) * signal[1]).margin(1e-8));

  // zero single-photon probability: Q1 = 0
  const Q1E1 none = q1_e1_from_estimate(exact, PhotonDistribution::vacuum(20));
  CHECK(none.q1 == 0.0);

  // bound mode never exceeds the exact gain
  const YieldEstimate bounds = bound_y1_e1(obs, 9, 0.0);
  const Q1E1 qb = q1_e1_from_estimate(bounds, signal);
  CHECK(qb.q1 <= qe.q1 + 1e-12);
}
