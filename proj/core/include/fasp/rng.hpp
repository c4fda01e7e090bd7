#pragma once

#include <cstdint>

namespace fasp {

/// SplitMix64 finalizer: a bijective 64-bit mixing function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator. The output for (seed, stream, counter) is
///
///   key  = mix64(seed ^ mix64(stream + 0x9e3779b97f4a7c15))
///   bits = mix64(key + 0x9e3779b97f4a7c15 * (counter + 1))
///
/// with all arithmetic modulo 2^64. There is no hidden state, so any draw can
/// be recomputed from its coordinates. See docs/rng.md.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(mix64(seed ^ mix64(stream + kGolden))) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix64(key_ + kGolden * (counter + 1));
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on uniforms at counters 2c and 2c+1.
  double normal(std::uint64_t counter) const noexcept;

  /// Integer in [0, n) as floor(uniform(counter) * n). Requires n > 0.
  std::uint64_t below(std::uint64_t n, std::uint64_t counter) const noexcept;

 private:
  std::uint64_t key_;
};

/// Sequential cursor over one CounterRng stream.
class RngCursor {
 public:
  constexpr RngCursor(std::uint64_t seed, std::uint64_t stream) noexcept : rng_(seed, stream) {}

  double uniform() noexcept { return rng_.uniform(next_++); }
  double normal() noexcept { return rng_.normal(next_++); }
  std::uint64_t below(std::uint64_t n) noexcept { return rng_.below(n, next_++); }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace fasp
