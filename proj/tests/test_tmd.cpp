#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "qkdsim/photon_stats.hpp"
#include "qkdsim/rng.hpp"
#include "qkdsim/tmd.hpp"

using namespace qkdsim;

namespace {

// Brute-force oracle: enumerate all N^k assignments of k photons to N bins
// and count distinct occupied bins.
std::vector<double> occupancy_by_enumeration(int n_bins, int k) {
  std::vector<double> dist(static_cast<std::size_t>(k) + 1, 0.0);
  const std::int64_t total = static_cast<std::int64_t>(std::pow(n_bins, k));
  for (std::int64_t code = 0; code < total; ++code) {
    std::int64_t c = code;
    std::uint32_t mask = 0;
    for (int i = 0; i < k; ++i) {
      mask |= 1u << (c % n_bins);
      c /= n_bins;
    }
    ++dist[static_cast<std::size_t>(std::popcount(mask))];
  }
  for (double& v : dist) v /= static_cast<double>(total);
  return dist;
}

double column_sum(const TriangularMatrix& m, int col) {
  double s = 0.0;
  for (int r = 0; r < m.dim(); ++r) s += m.at(r, col);
  return s;
}

}  // namespace

TEST_CASE("loss matrix: lossless case is the identity") {
  const TriangularMatrix L = loss_matrix(1.0, 6);
  for (int m = 0; m <= 6; ++m)
    for (int n = 0; n <= 6; ++n) CHECK(L.at(m, n) == (m == n ? 1.0 : 0.0));
}

TEST_CASE("loss matrix: single photon and binomial columns") {
  const TriangularMatrix L = loss_matrix(0.3, 6);
  CHECK(L.at(0, 1) == Catch::Approx(0.7));
  CHECK(L.at(1, 1) == Catch::Approx(0.3));
  CHECK(L.at(2, 1) == 0.0);

  const TriangularMatrix H = loss_matrix(0.5, 6);
  CHECK(H.at(0, 3) == Catch::Approx(0.125));
  CHECK(H.at(1, 3) == Catch::Approx(0.375));
  CHECK(H.at(2, 3) == Catch::Approx(0.375));
  CHECK(H.at(3, 3) == Catch::Approx(0.125));
}

TEST_CASE("convolution matrix: trivial columns") {
  const TriangularMatrix C = convolution_matrix(8, 6);
  CHECK(C.at(0, 0) == 1.0);
  CHECK(C.at(1, 1) == Catch::Approx(1.0));
  CHECK(C.at(1, 2) == Catch::Approx(1.0 / 8.0));
  CHECK(C.at(2, 2) == Catch::Approx(7.0 / 8.0));
}

TEST_CASE("convolution matrix matches exhaustive enumeration for N <= 4, k <= 6") {
  for (int n_bins = 1; n_bins <= 4; ++n_bins) {
    const TriangularMatrix C = convolution_matrix(n_bins, 6);
    for (int k = 0; k <= 6; ++k) {
      const std::vector<double> oracle = occupancy_by_enumeration(n_bins, k);
      for (int m = 0; m <= 6; ++m) {
        const double want = m < static_cast<int>(oracle.size()) ? oracle[m] : 0.0;
        CHECK(C.at(m, k) == Catch::Approx(want).margin(1e-12));
      }
    }
  }
}

TEST_CASE("L, C, and C*L are column-stochastic") {
  for (const double eta : {0.25, 0.5, 0.8, 1.0}) {
    for (const int n_bins : {4, 8, 16}) {
      const TMDModel model{n_bins, eta, 12};
      const TriangularMatrix L = loss_matrix(eta, 12);
      const TriangularMatrix C = convolution_matrix(n_bins, 12);
      const TriangularMatrix M = composite_matrix(model);
      for (int col = 0; col <= 12; ++col) {
        CHECK(column_sum(L, col) == Catch::Approx(1.0).margin(1e-12));
        CHECK(column_sum(C, col) == Catch::Approx(1.0).margin(1e-12));
        CHECK(column_sum(M, col) == Catch::Approx(1.0).margin(1e-12));
      }
    }
  }
}

TEST_CASE("forward: ideal detector passes a single photon through") {
  const TMDModel model{64, 1.0, 6};
  const PhotonDistribution sp = make_source({SourceKind::SinglePhoton, 0.0}, 6);
  const PhotonDistribution out = forward(model, sp);
  CHECK(out[1] == Catch::Approx(1.0));
}

TEST_CASE("forward: total loss maps everything to vacuum") {
  const TMDModel model{8, 0.0, 10};
  const PhotonDistribution src = make_source({SourceKind::Poissonian, 0.4}, 10);
  const PhotonDistribution out = forward(model, src);
  CHECK(out[0] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("forward agrees with Monte Carlo sampling of the physical process") {
  const TMDModel model{8, 0.5, 20};
  const PhotonDistribution src = make_source({SourceKind::Poissonian, 0.3}, 20);
  const PhotonDistribution expect = forward(model, src);

  constexpr int kSamples = 1000000;
  std::vector<std::int64_t> hist(21, 0);
  std::vector<double> cdf(src.probs());
  for (std::size_t i = 1; i < cdf.size(); ++i) cdf[i] += cdf[i - 1];
  for (int i = 0; i < kSamples; ++i) {
    CounterRng rng(123, static_cast<std::uint64_t>(i));
    const double u = rng.next_double();
    int n = 0;
    while (n < 20 && u >= cdf[static_cast<std::size_t>(n)]) ++n;
    std::uint32_t bins = 0;
    for (int ph = 0; ph < n; ++ph)
      if (rng.next_double() < model.eta_tmd)
        bins |= 1u << rng.next_below(8);
    ++hist[static_cast<std::size_t>(std::popcount(bins))];
  }
  for (int m = 0; m <= 8; ++m) {
    const double p = expect[m];
    const double sigma = std::sqrt(std::max(p * (1.0 - p), 1e-12) / kSamples);
    const double got = static_cast<double>(hist[static_cast<std::size_t>(m)]) / kSamples;
    CHECK(std::abs(got - p) < 4.0 * sigma + 1e-9);
  }
}

TEST_CASE("round trip: invert(forward(d)) = d for exact distributions") {
  for (const double eta : {0.25, 0.5, 0.8, 1.0}) {
    for (const int n_bins : {4, 8, 16}) {
      const int n_max = std::min(n_bins, 8);
      const TMDModel model{n_bins, eta, n_max};
      const PhotonDistribution src = make_source({SourceKind::Thermal, 0.3}, n_max, 1e-4);
      const PhotonDistribution meas = forward(model, src);
      for (const auto method : {InversionMethod::TriangularSolve,
                                InversionMethod::ConstrainedLeastSquares}) {
        const InversionResult res = invert(model, meas, method);
        for (int n = 0; n <= n_max; ++n)
          CHECK(res.distribution[n] == Catch::Approx(src[n]).margin(1e-9));
      }
    }
  }
}

TEST_CASE("inversion of a vacuum measurement yields vacuum") {
  const TMDModel model{8, 0.5, 8};
  const InversionResult res =
      invert(model, PhotonDistribution::vacuum(8), InversionMethod::TriangularSolve);
  CHECK(res.distribution[0] == Catch::Approx(1.0));
  for (int n = 1; n <= 8; ++n) CHECK(res.distribution[n] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("triangular solve is singular at eta_tmd = 0") {
  const TMDModel model{8, 0.0, 8};
  CHECK_THROWS_AS(
      invert(model, PhotonDistribution::vacuum(8), InversionMethod::TriangularSolve),
      singular_matrix_error);
}

TEST_CASE("triangular solve is singular past bin saturation") {
  const TMDModel model{4, 0.8, 8};  // outcomes cannot exceed 4 bins
  const PhotonDistribution meas =
      forward(model, make_source({SourceKind::Thermal, 0.3}, 8, 1e-8));
  CHECK_THROWS_AS(invert(model, meas, InversionMethod::TriangularSolve),
                  singular_matrix_error);
}

TEST_CASE("filter_vacuum renormalizes over non-vacuum outcomes") {
  const PhotonDistribution a({0.0, 0.6, 0.4});
  const PhotonDistribution fa = filter_vacuum(a);
  CHECK(fa[1] == Catch::Approx(0.6));
  CHECK(fa[2] == Catch::Approx(0.4));

  const PhotonDistribution b({0.5, 0.25, 0.25});
  const PhotonDistribution fb = filter_vacuum(b);
  CHECK(fb[0] == 0.0);
  CHECK(fb[1] == Catch::Approx(0.5));
  CHECK(fb[2] == Catch::Approx(0.5));

  const PhotonDistribution c({0.9, 0.09, 0.01});
  const PhotonDistribution fc = filter_vacuum(c);
  CHECK(fc[1] == Catch::Approx(0.9));
  CHECK(fc[2] == Catch::Approx(0.1));

  double sum = 0.0;
  for (int n = 0; n <= fc.n_max(); ++n) sum += fc[n];
  CHECK(sum == Catch::Approx(1.0).margin(1e-12));
  CHECK_THROWS_AS(filter_vacuum(PhotonDistribution::vacuum(4)), no_signal_error);
}

TEST_CASE("penalty factor limits") {
  const PhotonDistribution src = make_source({SourceKind::Thermal, 0.4}, 20);
  CHECK(penalty_factor({8, 1.0, 20}, src) == Catch::Approx(1.0 - src[0]).margin(1e-12));
  CHECK(penalty_factor({8, 0.0, 20}, src) == Catch::Approx(0.0).margin(1e-12));
  const PhotonDistribution sp = make_source({SourceKind::SinglePhoton, 0.0}, 20);
  CHECK(penalty_factor({8, 0.5, 20}, sp) == Catch::Approx(0.5));
}

TEST_CASE("penalty factor is monotone in eta_tmd and in the mean photon number") {
  const PhotonDistribution src = make_source({SourceKind::Poissonian, 0.3}, 20);
  double prev = -1.0;
  for (double eta = 0.0; eta <= 1.0; eta += 0.1) {
    const double p = penalty_factor({8, eta, 20}, src);
    CHECK(p >= prev);
    prev = p;
  }
  prev = -1.0;
  for (double chi = 0.05; chi <= 0.5; chi += 0.05) {
    const double p = penalty_factor({8, 0.5, 20}, make_source({SourceKind::Poissonian, chi}, 25));
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("effective filtered source: perfect heralding removes exactly vacuum") {
  const TMDModel model{64, 1.0, 12};
  const PhotonDistribution src = make_source({SourceKind::Thermal, 0.3}, 12);
  const PhotonDistribution eff = effective_filtered_source(model, src);
  CHECK(eff[0] == 0.0);
  for (int n = 1; n <= 12; ++n)
    CHECK(eff[n] == Catch::Approx(src[n] / (1.0 - src[0])).margin(1e-12));
}

TEST_CASE("effective filtered source: a deterministic photon number is unchanged") {
  const TMDModel model{8, 0.4, 6};
  const PhotonDistribution sp = make_source({SourceKind::SinglePhoton, 0.0}, 6);
  const PhotonDistribution eff = effective_filtered_source(model, sp);
  CHECK(eff[1] == Catch::Approx(1.0));
}

TEST_CASE("conditioning identity against the inversion route for a lossless TMD") {
  // With eta_tmd = 1 no photon escapes undetected, and conditioning on a
  // non-vacuum outcome commutes with the linear inversion.
  const TMDModel model{16, 1.0, 10};
  const PhotonDistribution src = make_source({SourceKind::Poissonian, 0.4}, 10);
  const PhotonDistribution eff = effective_filtered_source(model, src);
  const PhotonDistribution via_inversion =
      invert(model, filter_vacuum(forward(model, src)), InversionMethod::TriangularSolve)
          .distribution;
  for (int n = 0; n <= 10; ++n)
    CHECK(eff[n] == Catch::Approx(via_inversion[n]).margin(1e-9));
}

TEST_CASE("effective filtered source matches the Monte Carlo conditioning oracle") {
  const TMDModel model{8, 0.5, 20};
  const PhotonDistribution src = make_source({SourceKind::Thermal, 0.4}, 20);
  const PhotonDistribution eff = effective_filtered_source(model, src);

  constexpr std::int64_t kSamples = 10000000;
  std::vector<double> cdf(src.probs());
  for (std::size_t i = 1; i < cdf.size(); ++i) cdf[i] += cdf[i - 1];
  std::vector<std::int64_t> kept(21, 0);
  std::int64_t n_kept = 0;
  for (std::int64_t i = 0; i < kSamples; ++i) {
    CounterRng rng(7, static_cast<std::uint64_t>(i));
    const double u = rng.next_double();
    int n = 0;
    while (n < 20 && u >= cdf[static_cast<std::size_t>(n)]) ++n;
    bool clicked = false;
    for (int ph = 0; ph < n; ++ph)
      if (rng.next_double() < model.eta_tmd) clicked = true;
    if (clicked) {
      ++kept[static_cast<std::size_t>(n)];
      ++n_kept;
    }
  }
  double tv = 0.0;
  for (int n = 0; n <= 20; ++n)
    tv += std::abs(static_cast<double>(kept[static_cast<std::size_t>(n)]) / n_kept - eff[n]);
  CHECK(tv / 2.0 < 2e-3);
}
