#pragma once
// Seeded randomness. All stochastic behavior in the library flows through Rng
// so that a run is a pure function of its config seeds.
//
// Algorithm identifier (echoed into run metadata): "mt19937_64+box-muller".
// Gaussian draws use the Box-Muller transform on top of mt19937_64 uniforms
// instead of std::normal_distribution, whose output is implementation-defined;
// this keeps the distributional recipe reproducible across toolchains.

#include <cmath>
#include <cstdint>
#include <random>

namespace pitta {

inline constexpr char kRngAlgorithm[] = "mt19937_64+box-muller";

// splitmix64 step; used to derive independent sub-seeds from (seed, stream id).
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ull + 1));
}

class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1).
  double uniform() {
    // 53 random bits -> double, avoids distribution-object variability.
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. One value per call; the paired value is
  // discarded so draw sequences stay position-independent.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n).
  uint64_t index(uint64_t n) { return n ? gen_() % n : 0; }

private:
  std::mt19937_64 gen_;
};

}  // namespace pitta
