#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

namespace cwsynth::detail {

// exp(x) for x <= 0, branch-free so loops over it vectorize. Relative error ~1e-16.
inline double exp_nonpositive(double x) noexcept {
  constexpr double shifter = 6755399441055744.0;  // 1.5 * 2^52: adding it rounds to an integer
  x = x < -700.0 ? -700.0 : x;
  const double k = (x * 1.4426950408889634 + shifter) - shifter;
  const double r = (x - k * 6.93147180369123816490e-01) - k * 1.90821492927058770002e-10;
  double p = 1.0 / 6227020800.0;
  p = p * r + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  // 2^k: the low mantissa bits of (k + 1023 + 1.5 * 2^52) hold the biased exponent.
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(k + 1023.0 + shifter) << 52;
  return p * std::bit_cast<double>(bits);
}

}  // namespace cwsynth::detail
