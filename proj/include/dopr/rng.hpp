#pragma once

// Portable random streams.
//
// std::mt19937_64 has a fully specified output sequence, but the standard
// distributions do not, so the conversions below are done by hand. That keeps
// every run a pure function of its seed on any conforming toolchain.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace dopr {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a path of indices,
/// e.g. derive_seed(seed, step, slot). Order-sensitive.
template <typename... Ix>
constexpr std::uint64_t derive_seed(std::uint64_t base, Ix... ix) {
  std::uint64_t h = splitmix64(base);
  ((h = splitmix64(h ^ (static_cast<std::uint64_t>(ix) + 0x632BE59BD9B4E019ULL))), ...);
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Rejection sampling, unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  /// Standard normal via Box-Muller (one draw per call, second value dropped).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dopr
