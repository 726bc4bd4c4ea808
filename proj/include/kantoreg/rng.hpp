#pragma once

#include <cmath>
#include <cstdint>

namespace kantoreg {

// Counter-based generator: value = mix(seed, counter). Stateless apart from the
// counter, so streams are reproducible bit-for-bit across platforms and can be
// split by handing out disjoint counter ranges.
struct Rng {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  explicit Rng(std::uint64_t s = 0, std::uint64_t start = 0) : seed(s), counter(start) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() { return mix(seed ^ mix(counter++)); }

  // uniform in [0,1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  double log_uniform(double a, double b) { return a * std::exp(uniform() * std::log(b / a)); }

  // Box-Muller, one value per call (the pair's second half is dropped to keep
  // the counter->value mapping position-independent)
  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }
};

}  // namespace kantoreg
