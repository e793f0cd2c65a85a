#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qkdsim/channel.hpp"
#include "qkdsim/rng.hpp"

using namespace qkdsim;

namespace {
const ChannelModel gys{};  // GYS defaults
}

TEST_CASE("transmittance") {
  ChannelModel c;
  c.eta_bob = 1.0;
  CHECK(transmittance(c, 0.0) == Catch::Approx(1.0));
  c.alpha = 0.21;
  CHECK(transmittance(c, 100.0) == Catch::Approx(7.943282347243e-3).epsilon(1e-10));
  c.eta_bob = 0.045;
  CHECK(transmittance(c, 100.0) == Catch::Approx(3.574477056259e-4).epsilon(1e-10));
  double prev = 1.0;
  for (double l = 10.0; l <= 200.0; l += 10.0) {
    const double t = transmittance(c, l);
    CHECK(t < prev);
    prev = t;
  }
}

TEST_CASE("eta_n") {
  CHECK(eta_n(0.3, 0) == 0.0);
  CHECK(eta_n(0.3, 1) == Catch::Approx(0.3));
  CHECK(eta_n(0.1, 3) == Catch::Approx(0.271));
}

TEST_CASE("yield_n") {
  CHECK(yield_n(gys, 0.5, 0) == Catch::Approx(gys.y0));
  ChannelModel nb = gys;
  nb.y0 = 0.0;
  CHECK(yield_n(nb, 0.37, 1) == Catch::Approx(0.37));
  const double eta = 3.574477056259e-4;
  const double eta2 = 1.0 - (1.0 - eta) * (1.0 - eta);
  CHECK(eta2 == Catch::Approx(7.147676358e-4).epsilon(1e-6));
  CHECK(yield_n(gys, eta, 2) ==
        Catch::Approx(gys.y0 + eta2 - gys.y0 * eta2).epsilon(1e-12));
  // monotone in n
  double prev = 0.0;
  for (int n = 0; n <= 20; ++n) {
    const double y = yield_n(gys, 0.01, n);
    CHECK(y >= prev);
    prev = y;
  }
}

TEST_CASE("error_n") {
  CHECK(error_n(gys, 0.3, 0) == 0.5);
  ChannelModel nb = gys;
  nb.y0 = 0.0;
  for (int n = 1; n <= 5; ++n) CHECK(error_n(nb, 0.2, n) == Catch::Approx(nb.e_det));
  // large n with small background: error tends to e_det
  CHECK(error_n(gys, 0.5, 40) == Catch::Approx(gys.e_det).margin(1e-4));
  // non-increasing for n >= 1
  double prev = 1.0;
  for (int n = 1; n <= 20; ++n) {
    const double e = error_n(gys, 0.001, n);
    CHECK(e <= prev + 1e-15);
    prev = e;
  }
}

TEST_CASE("gain and QBER: vacuum source sees only background") {
  const GainQber gq = gain_and_qber(gys, 50.0, PhotonDistribution::vacuum(10));
  CHECK(gq.q_chi == Catch::Approx(gys.y0));
  CHECK(gq.e_chi == Catch::Approx(0.5));
}

TEST_CASE("gain and QBER: single photon with no background") {
  ChannelModel nb = gys;
  nb.y0 = 0.0;
  const PhotonDistribution sp = make_source({SourceKind::SinglePhoton, 0.0}, 5);
  const GainQber gq = gain_and_qber(nb, 75.0, sp);
  CHECK(gq.q_chi == Catch::Approx(transmittance(nb, 75.0)).epsilon(1e-12));
  CHECK(gq.e_chi == Catch::Approx(nb.e_det).epsilon(1e-12));
}

TEST_CASE("gain and QBER match an independent term-by-term summation") {
  const double l = 50.0;
  const PhotonDistribution p = make_source({SourceKind::Poissonian, 0.3}, 20);
  const double eta = std::pow(10.0, -gys.alpha * l / 10.0) * gys.eta_bob;
  double q = 0.0, eq = 0.0;
  for (int n = 0; n <= 20; ++n) {
    const double etan = 1.0 - std::pow(1.0 - eta, n);
    const double yn = gys.y0 + etan - gys.y0 * etan;
    const double en = n == 0 ? 0.5 : (0.5 * gys.y0 + gys.e_det * etan) / yn;
    q += yn * p[n];
    eq += yn * en * p[n];
  }
  const GainQber gq = gain_and_qber(gys, l, p);
  CHECK(gq.q_chi == Catch::Approx(q).margin(1e-12));
  CHECK(gq.e_chi == Catch::Approx(eq / q).margin(1e-12));
}

TEST_CASE("gain is linear in the source distribution") {
  const PhotonDistribution a = make_source({SourceKind::Poissonian, 0.2}, 20);
  const PhotonDistribution b = make_source({SourceKind::Thermal, 0.4}, 20);
  CounterRng rng(99, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const double w = rng.next_double();
    std::vector<double> mixed(21);
    for (int n = 0; n <= 20; ++n) mixed[static_cast<std::size_t>(n)] = w * a[n] + (1.0 - w) * b[n];
    double s = 0.0;
    for (double v : mixed) s += v;
    const PhotonDistribution mix(std::move(mixed), std::max(0.0, 1.0 - s));
    const GainQber ga = gain_and_qber(gys, 30.0, a);
    const GainQber gb = gain_and_qber(gys, 30.0, b);
    const GainQber gm = gain_and_qber(gys, 30.0, mix);
    CHECK(gm.q_chi == Catch::Approx(w * ga.q_chi + (1.0 - w) * gb.q_chi).margin(1e-14));
  }
}

TEST_CASE("QBER stays within its physical band") {
  for (const double l : {0.0, 50.0, 100.0, 150.0, 200.0}) {
    for (const double chi : {0.1, 0.3, 0.5}) {
      const GainQber gq = gain_and_qber(gys, l, make_source({SourceKind::Thermal, chi}, 25));
      CHECK(gq.q_chi >= gys.y0 * 0.999);
      CHECK(gq.q_chi <= 1.0);
      CHECK(gq.e_chi >= gys.e_det - 1e-12);
      CHECK(gq.e_chi <= 0.5 + 1e-12);
    }
  }
}
