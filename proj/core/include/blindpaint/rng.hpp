// Seeded random number generation with a fixed, versioned algorithm:
// xoshiro256++ seeded through splitmix64, uniform doubles from the top
// 53 bits, normals via Box-Muller. The algorithm id is written into
// checkpoint and dataset headers so synthetic data stays reproducible.
#pragma once

#include <cmath>
#include <cstdint>

#include "blindpaint/common.hpp"

namespace blindpaint {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic worker-stream derivation: hash(seed, k).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t s = seed ^ (0xA0761D6478BD642FULL * (k + 1));
  return splitmix64(s);
}

class Rng {
 public:
  static constexpr const char* kAlgorithmId = "xoshiro256++/box-muller/v1";

  explicit Rng(std::uint64_t seed) : seed_(seed), has_spare_(false), spare_(0.0) {
    std::uint64_t sm = seed;
    for (auto& w : state_) w = splitmix64(sm);
  }

  std::uint64_t seed() const { return seed_; }

  // Worker k's independent stream.
  Rng split(std::uint64_t k) const { return Rng(derive_seed(seed_, k)); }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) {
    if (!(b > a)) throw Error(ErrorKind::InvalidDistributionParams, "uniform requires b > a");
    return a + (b - a) * next_double();
  }

  // Integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw Error(ErrorKind::InvalidDistributionParams, "uniform_int requires hi >= lo");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  double normal(double mu, double sigma) {
    if (sigma < 0.0) throw Error(ErrorKind::InvalidDistributionParams, "normal requires sigma >= 0");
    if (has_spare_) {
      has_spare_ = false;
      return mu + sigma * spare_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mu + sigma * r * std::cos(theta);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  std::uint64_t seed_;
  bool has_spare_;
  double spare_;
};

}  // namespace blindpaint
