// Truncated photon-number distributions for PDC and reference sources.

#ifndef QKDSIM_PHOTON_STATS_HPP
#define QKDSIM_PHOTON_STATS_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkdsim {

struct truncation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kDefaultNMax = 20;
constexpr double kDefaultTailTol = 1e-10;

// Probability vector over photon numbers 0..n_max. tail_mass records the
// probability beyond n_max at construction; it is never silently folded
// back into the stored entries.
class PhotonDistribution {
 public:
  PhotonDistribution() = default;

  explicit PhotonDistribution(std::vector<double> probs, double tail_mass = 0.0)
      : probs_(std::move(probs)), tail_mass_(tail_mass) {
    if (probs_.empty()) throw std::invalid_argument("empty distribution");
    double sum = tail_mass_;
    for (double p : probs_) {
      if (p < 0.0) throw std::invalid_argument("negative probability entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("distribution does not normalize: sum = " +
                                  std::to_string(sum));
  }

  static PhotonDistribution vacuum(int n_max) {
    std::vector<double> p(static_cast<std::size_t>(n_max) + 1, 0.0);
    p[0] = 1.0;
    return PhotonDistribution(std::move(p));
  }

  int n_max() const { return static_cast<int>(probs_.size()) - 1; }
  double tail_mass() const { return tail_mass_; }
  double operator[](int n) const { return probs_[static_cast<std::size_t>(n)]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
  double tail_mass_ = 0.0;
};

enum class SourceKind { Poissonian, Thermal, SinglePhoton };

// chi is the PDC interaction parameter; mean photon number is sinh^2(chi).
// SinglePhoton ignores chi.
struct SourceSpec {
  SourceKind kind = SourceKind::Poissonian;
  double chi = 0.1;
};

inline double mean_from_chi(double chi) {
  const double s = std::sinh(chi);
  return s * s;
}

inline PhotonDistribution make_source(const SourceSpec& spec, int n_max,
                                      double tail_tol = kDefaultTailTol) {
  if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
  std::vector<double> p(static_cast<std::size_t>(n_max) + 1, 0.0);

  if (spec.kind == SourceKind::SinglePhoton) {
    p[1] = 1.0;
    return PhotonDistribution(std::move(p));
  }

  if (!(spec.chi > 0.0)) throw std::invalid_argument("chi must be > 0 for PDC sources");
  const double mu = mean_from_chi(spec.chi);

  double sum = 0.0;
  if (spec.kind == SourceKind::Poissonian) {
    double term = std::exp(-mu);  // p(0)
    for (int n = 0; n <= n_max; ++n) {
      p[static_cast<std::size_t>(n)] = term;
      sum += term;
      term *= mu / (n + 1);
    }
  } else {  // Thermal: geometric with mean mu
    double term = 1.0 / (1.0 + mu);  // p(0)
    const double ratio = mu / (1.0 + mu);
    for (int n = 0; n <= n_max; ++n) {
      p[static_cast<std::size_t>(n)] = term;
      sum += term;
      term *= ratio;
    }
  }

  const double tail = std::max(0.0, 1.0 - sum);
  if (tail > tail_tol)
    throw truncation_error("tail mass " + std::to_string(tail) +
                           " exceeds tolerance; increase n_max");
  return PhotonDistribution(std::move(p), tail);
}

inline double mean_photon_number(const PhotonDistribution& d) {
  double m = 0.0;
  for (int n = 1; n <= d.n_max(); ++n) m += n * d[n];
  return m;
}

}  // namespace qkdsim

#endif  // QKDSIM_PHOTON_STATS_HPP
