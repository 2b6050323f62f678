#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bevbench {

// SplitMix64 finalizer. Used to derive independent stream seeds; the mixing
// function is part of the reproducibility contract and must not change.
inline uint64_t mix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t salt) {
  return mix64(base + mix64(salt));
}

// Seeded generator with explicit, implementation-pinned distributions.
// std::mt19937_64 has a standard-specified output sequence; the mappings
// below avoid libstdc++-specific distribution internals so that identical
// seeds give identical draws on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe to feed std::log.
  double uniform01_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n); n must be > 0.
  uint64_t uniform_int(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  // Exact Poisson draw by counting unit-rate exponential arrivals in [0, lambda).
  // O(lambda) but free of the e^-lambda underflow of the product method.
  uint64_t poisson(double lambda) {
    if (!(lambda > 0.0)) return 0;
    uint64_t k = 0;
    double s = 0.0;
    for (;;) {
      s += -std::log(uniform01_open());
      if (s >= lambda) break;
      ++k;
    }
    return k;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace bevbench
