// Counter-based deterministic RNG. Each (seed, counter) pair yields an
// independent substream, so sharded simulations tally identically for any
// worker count and platform.

#ifndef QKDSIM_RNG_HPP
#define QKDSIM_RNG_HPP

#include <cstdint>

namespace qkdsim {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : state_(splitmix64(seed ^ splitmix64(stream))) {}

  std::uint64_t next_u64() {
    state_ = splitmix64(state_);
    return state_;
  }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    // rejection to avoid modulo bias
    const std::uint64_t limit = n * ((~0ULL) / n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

 private:
  std::uint64_t state_;
};

}  // namespace qkdsim

#endif  // QKDSIM_RNG_HPP
