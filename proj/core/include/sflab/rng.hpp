#pragma once

#include <cstdint>
#include <vector>

namespace sflab {

/// SplitMix64 generator (Steele, Lea & Flood 2014). The state advances by the
/// golden-gamma constant and each output is the state passed through the
/// murmur3-style finalizer, so a given seed produces the same stream on every
/// platform. `split()` derives an independent child stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 24 bits of mantissa.
  float uniform01() noexcept;
  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform01_f64() noexcept;
  float uniform(float lo, float hi) noexcept { return lo + (hi - lo) * uniform01(); }
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Standard normal via the Marsaglia polar method.
  float normal() noexcept;

  Rng split() noexcept;

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::int64_t> permutation(std::int64_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sflab
