#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gensense/tensor.hpp"

namespace gensense {

enum class ModalityTransform { invert, invert_gamma };

struct ModalitySpec {
  ModalityTransform transform = ModalityTransform::invert;
  double gamma = 1.0;  // invert_gamma only

  // "invert" or "invert_gamma:<gamma>"
  static ModalitySpec parse(std::string_view id);
  std::string describe() const;

  friend bool operator==(const ModalitySpec&, const ModalitySpec&) = default;
};

enum class DegradationKind { identity, blur, awgn, modality };

/// One simulated low-end sensor effect.
struct DegradationSpec {
  DegradationKind kind = DegradationKind::identity;
  double sigma = 0.0;      // blur sigma_b or noise sigma_n
  std::uint64_t seed = 0;  // awgn stream
  ModalitySpec modality;   // modality
  std::string modality_tag = "RGB";

  static DegradationSpec identity();
  static DegradationSpec blur(double sigma_b);
  static DegradationSpec awgn(double sigma_n, std::uint64_t seed);
  static DegradationSpec modality_shift(ModalitySpec modality, std::string tag);

  // "identity", "blur:<sigma>", "awgn:<sigma>:<seed>", "modality:<id>"
  std::string describe() const;
  static DegradationSpec parse(std::string_view text);

  friend bool operator==(const DegradationSpec&, const DegradationSpec&) = default;
};

// Effects applied left to right, e.g. a modality shift followed by blur.
using DegradationChain = std::vector<DegradationSpec>;

std::size_t gaussian_kernel_size(double sigma_b);

// Square (k x k) kernel, k = 2 * ceil(2 sigma_b) + 1, sampled on the integer
// grid and normalized to unit sum.
Tensor gaussian_kernel(double sigma_b);

// Single images are (channels, height, width).
Tensor apply_blur(const Tensor& image, double sigma_b);
Tensor apply_awgn(const Tensor& image, double sigma_n, std::uint64_t seed);
Tensor apply_modality(const Tensor& image, const ModalitySpec& modality);
Tensor apply_degradation(const Tensor& image, const DegradationSpec& degradation);

// Batches are (batch, channels, height, width). Image i of a noisy batch draws
// from the stream derived from (seed, i), so any split of the batch gives the
// same pixels.
Tensor degrade_batch(const Tensor& batch, const DegradationSpec& degradation);
Tensor degrade_batch(const Tensor& batch, std::span<const DegradationSpec> chain);

}  // namespace gensense
