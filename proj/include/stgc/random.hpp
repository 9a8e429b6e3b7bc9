#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>

namespace stgc {

// Sampling helpers on top of std::mt19937_64. The engine's output sequence is
// fixed by the standard, so these give the same draws on every toolchain
// (unlike the std:: distributions, whose algorithms are unspecified).

/// Uniform integer in [0, bound) by rejection.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t bound) {
  const std::uint64_t b = bound;
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % b;
  std::uint64_t r = 0;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % b);
}

/// Uniform double in [0, 1).
inline double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal draws (Marsaglia polar method); keeps the spare value.
class NormalSampler {
 public:
  double operator()(std::mt19937_64& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0, v = 0.0, s = 0.0;
    do {
      u = 2.0 * uniform_unit(rng) - 1.0;
      v = 2.0 * uniform_unit(rng) - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double k = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * k;
    has_spare_ = true;
    return u * k;
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace stgc
