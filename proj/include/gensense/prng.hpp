#pragma once

#include <cstdint>

namespace gensense {

/// SplitMix64 generator. Every random draw in the project (initialization,
/// noise, dataset rendering, shuffling) goes through this stream so results are
/// reproducible bit-for-bit from the seed alone.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound); bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;

  // Standard normal via Box-Muller. Consumes two uniforms and returns the cosine branch.
  double gaussian() noexcept;

  // Independent child stream for (seed, stream index).
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;
  static SplitMix64 derive(std::uint64_t seed, std::uint64_t stream) noexcept {
    return SplitMix64(derive_seed(seed, stream));
  }

 private:
  std::uint64_t state_;
};

}  // namespace gensense
