#pragma once

#include <cmath>
#include <cstdint>

namespace cesdem {

inline constexpr double kEulerMascheroni = 0.57721566490153286;
inline constexpr double kPi = 3.14159265358979323846;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& s) {
  s += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}
}  // namespace detail

// xoshiro256** seeded through splitmix64 from a (seed, stream) pair. Streams
// are independent of generation order, so per-market substreams can be drawn
// concurrently and still reproduce bit-identically.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t s = seed ^ (stream * 0x9e3779b97f4a7c15ull + 0x71c93d67121e16acull);
    for (auto& word : s_) word = detail::splitmix64(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  // strictly inside (0,1); safe under log/log-log transforms
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  std::uint64_t uniform_int(std::uint64_t n) {
    // rejection sampling, no modulo bias
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double lognormal(double mu, double sigma) {
    return std::exp(mu + sigma * normal());
  }

  // standard Gumbel (max); mean is the Euler-Mascheroni constant
  double gumbel() { return -std::log(-std::log(uniform01())); }

  double logistic() {
    const double u = uniform01();
    return std::log(u / (1.0 - u));
  }

  long poisson(double lambda) {
    // Knuth product method; fine for the small rates used here
    const double limit = std::exp(-lambda);
    long k = 0;
    double prod = uniform01();
    while (prod > limit) {
      ++k;
      prod *= uniform01();
    }
    return k;
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace cesdem
