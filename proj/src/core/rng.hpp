#pragma once

#include <cmath>
#include <cstdint>

namespace laif {

/// Deterministic 64-bit random stream: xoshiro256** seeded through splitmix64.
/// Every draw below is a fixed function of the seed and the draw index, so a
/// dataset or an initialization can be replayed bit-for-bit from the seed
/// alone (and re-implemented in another language from this description):
///   - state: four 64-bit words, filled by four successive splitmix64 steps
///   - next(): xoshiro256** (rotl(s1*5, 7)*9, standard update)
///   - uniform_float(): high 24 bits of next() scaled by 2^-24, in [0,1)
///   - uniform_double(): high 53 bits scaled by 2^-53, in [0,1)
///   - normal(): Box-Muller, sqrt(-2 ln u1) * cos(2 pi u2), two draws each
///   - below(n): Lemire's multiply-shift bound reduction, one draw
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0,1) with float32 granularity.
  float uniform_float() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }

  /// Uniform in [0,1) with double granularity.
  double uniform_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform_double(); }

  /// Standard normal draw (Box-Muller; consumes two stream values).
  double normal() {
    double u1 = uniform_double();
    while (u1 <= 0.0) u1 = uniform_double();
    const double u2 = uniform_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<__uint128_t>(next()) * n) >> 64);
  }

  /// Derives an independent stream seed from a base seed and a stream tag.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t x = seed ^ (tag * 0x9e3779b97f4a7c15ULL);
    return splitmix64(x);
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4];
};

}  // namespace laif
