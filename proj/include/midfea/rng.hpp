#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace midfea {

/// Deterministic pseudo-random generator: xoshiro256** whose 256-bit state is
/// filled by four successive splitmix64 outputs of the seed.
///
///   splitmix64: z += 0x9E3779B97F4A7C15;
///               z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
///               z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
///               return z ^ (z >> 31);
///   xoshiro256**: result = rotl(s1 * 5, 7) * 9; t = s1 << 17;
///               s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45);
///
/// The integer stream is identical on every platform. uniform() takes the top
/// 53 bits; normal() uses the Box-Muller transform, so its low-order bits
/// follow the host libm.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); unbiased (rejection sampling). n must be > 0.
  std::size_t below(std::size_t n);
  /// Standard normal deviate.
  double normal();

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  /// Derives an independent generator; used to give sub-tasks their own
  /// stream without consuming the parent's sequence order-dependently.
  SeededRng fork(std::uint64_t stream);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace midfea
