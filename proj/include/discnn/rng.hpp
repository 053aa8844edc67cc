#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace discnn {

// mt19937 output is pinned by the standard; the distributions below are
// pinned by us, so seeded generation is byte-identical across compilers
// (std::uniform_real_distribution et al. are implementation-defined).
struct Rng {
  std::mt19937 gen;

  explicit Rng(uint32_t seed) : gen(seed) {}

  // uniform in [0, 1), 53-bit resolution (genrand_res53 construction)
  double uniform() {
    double a = static_cast<double>(gen() >> 5);   // 27 bits
    double b = static_cast<double>(gen() >> 6);   // 26 bits
    return (a * 67108864.0 + b) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [lo, hi] inclusive, unbiased enough for our jitter use
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(uniform() * static_cast<double>(hi - lo + 1));
  }

  // standard normal via Box-Muller
  double normal() {
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

}  // namespace discnn
