#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "densedial/common.hpp"

namespace densedial {

// Deterministic random source. std::mt19937_64 is fully specified by the
// standard, and all derived draws (uniform, gaussian, bounded index) are
// implemented here rather than via std::*_distribution, whose output is
// implementation-defined. Identical seeds therefore give identical streams
// on any conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n) without modulo bias (rejection sampling).
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw ConfigError("uniform_index: n must be positive");
    const std::uint64_t span = (UINT64_MAX / n) * n;
    for (;;) {
      const std::uint64_t v = next_u64();
      if (v < span) return static_cast<std::size_t>(v % n);
    }
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  // Fisher-Yates; std::shuffle is implementation-defined, this is not.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace densedial
