#include "gensense/prng.hpp"

#include <cmath>
#include <numbers>

namespace gensense {

std::uint64_t SplitMix64::below(std::uint64_t bound) noexcept {
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return x % bound;
}

double SplitMix64::gaussian() noexcept {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t SplitMix64::derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  SplitMix64 mixer(seed ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
  return mixer.next();
}

}  // namespace gensense
