#pragma once

#include <bit>
#include <cstdint>

namespace cesdem {

// bit pattern of -708.0; arguments below are pinned there (exp ~ 3e-308,
// invisible next to O(1) kernel terms)
inline constexpr std::uint64_t kExpNegClampBits = 0xc086200000000000ull;

// exp(x) for x <= 0, ~1e-14 relative error. Branch-free (the clamp is an
// unsigned compare on the bit pattern, which for sign-bit-set doubles orders
// opposite to the value) so the O(n^2) kernel loops vectorize; gcc will not
// form FP min/max here without fast-math.
inline double exp_neg(double x) {
  std::uint64_t xb = std::bit_cast<std::uint64_t>(x);
  if (xb > kExpNegClampBits) xb = kExpNegClampBits;
  const double clamped = std::bit_cast<double>(xb);

  constexpr double kLog2e = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShift = 6755399441055744.0;  // 1.5 * 2^52

  const double kd = clamped * kLog2e + kShift;  // round-to-nearest trick
  const std::int64_t kbits = std::bit_cast<std::int64_t>(kd);
  const double k = kd - kShift;
  const double r = (clamped - k * kLn2Hi) - k * kLn2Lo;  // |r| <= ln2/2

  // degree-11 Taylor on [-ln2/2, ln2/2]
  double p = 1.0 / 39916800.0;
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

  // scale by 2^k through the exponent bits; k is in the low bits of kd
  const std::int64_t bits = (kbits + 1023) << 52;
  return p * std::bit_cast<double>(bits);
}

}  // namespace cesdem
