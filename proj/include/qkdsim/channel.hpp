// Quantum channel and receiver model: distance-dependent transmission,
// per-photon-number yields and error rates, observable gain and QBER.

#ifndef QKDSIM_CHANNEL_HPP
#define QKDSIM_CHANNEL_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qkdsim/photon_stats.hpp"

namespace qkdsim {

struct no_detection_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Defaults follow the Gobby-Yuan-Shields fibre experiment parameter set.
struct ChannelModel {
  double alpha = 0.21;    // fibre loss, dB/km
  double eta_bob = 0.045; // receiver transmittance x detector efficiency
  double y0 = 1.7e-6;     // background yield per slot
  double e_det = 0.033;   // misalignment error probability
  static constexpr double e0 = 0.5;  // vacuum error rate
};

inline double transmittance(const ChannelModel& c, double l_km) {
  if (l_km < 0.0) throw std::invalid_argument("distance must be >= 0");
  return std::pow(10.0, -c.alpha * l_km / 10.0) * c.eta_bob;
}

// Probability that at least one of n photons survives transmission eta.
inline double eta_n(double eta, int n) {
  if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("eta out of [0,1]");
  if (n < 0) throw std::invalid_argument("n must be >= 0");
  return 1.0 - std::pow(1.0 - eta, n);
}

// Y_n = y0 + eta_n - y0*eta_n: arrival or background, independently.
inline double yield_n(const ChannelModel& c, double eta, int n) {
  const double en = eta_n(eta, n);
  return c.y0 + en - c.y0 * en;
}

// e_n = (e0*y0 + e_det*eta_n) / Y_n; background errors are random,
// arrived photons err with the misalignment probability.
inline double error_n(const ChannelModel& c, double eta, int n) {
  const double yn = yield_n(c, eta, n);
  if (yn <= 0.0) throw no_detection_error("Y_n = 0; error rate undefined");
  if (n == 0) return ChannelModel::e0;
  return std::min(ChannelModel::e0,
                  (ChannelModel::e0 * c.y0 + c.e_det * eta_n(eta, n)) / yn);
}

struct GainQber {
  double q_chi = 0.0;
  double e_chi = 0.0;
};

inline GainQber gain_and_qber(const ChannelModel& c, double l_km,
                              const PhotonDistribution& p) {
  const double eta = transmittance(c, l_km);
  double q = 0.0, eq = 0.0;
  for (int n = 0; n <= p.n_max(); ++n) {
    if (p[n] == 0.0) continue;
    const double yn = yield_n(c, eta, n);
    q += yn * p[n];
    eq += yn * error_n(c, eta, n) * p[n];
  }
  if (q <= 0.0) throw no_detection_error("zero gain for this configuration");
  return {q, eq / q};
}

}  // namespace qkdsim

#endif  // QKDSIM_CHANNEL_HPP
