// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random draws. All distributions are implemented on top of
// mt19937_64 raw output so that streams are identical across standard
// libraries and platforms.

#ifndef KINDISC_RNG_HPP
#define KINDISC_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "kindisc/common.hpp"

namespace kindisc {

class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

  /// Standard normal via Box-Muller; stateless (two uniforms per draw).
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double std_dev) { return mean + std_dev * normal(); }

  /// Uniform integer in [0, n). Modulo bias is negligible for our n and the
  /// mapping is pinned, which matters more here than exactness.
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : gen_() % n; }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

  bool bernoulli(double p) { return uniform01() < p; }

private:
  std::mt19937_64 gen_;
};

}  // namespace kindisc

#endif  // KINDISC_RNG_HPP
