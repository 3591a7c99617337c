#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gensense/baseline.hpp"
#include "gensense/degrade.hpp"
#include "gensense/susceptibility.hpp"

namespace gensense {

/// Residual block over the selected channels of one layer's output:
///   y = x + conv_{w->n}(relu(conv_{n->w}(x))), both convolutions 3x3 "same".
struct GenerativeUnit {
  std::size_t layer_index = 0;
  std::vector<std::size_t> channels;
  std::size_t width = 0;
  ParamSet params;  // {first conv, relu (empty), second conv}

  std::array<LayerSpec, 3> layers() const;
  std::size_t parameter_count() const { return gensense::parameter_count(params); }
  // x is (batch, channels.size(), h, w).
  Tensor apply(const Tensor& x) const;

  friend bool operator==(const GenerativeUnit&, const GenerativeUnit&) = default;
};

std::size_t default_unit_width(std::size_t selected_channels);

// First convolution drawn with the Glorot rule from SplitMix64(seed); second
// convolution all zeros, so the fresh unit is the identity.
GenerativeUnit build_generative_unit(const SignificanceMask& mask, std::size_t width, std::uint64_t seed);

enum class RegularizerKind { l1, l2 };

struct RegularizationSpec {
  RegularizerKind kind = RegularizerKind::l2;
  double lambda = 0.0;

  static RegularizerKind parse_kind(std::string_view text);
};

// rho: sum of |w| (l1) or w^2 (l2) over every weight and bias.
double regularizer(const ParamSet& params, RegularizerKind kind);
double regularizer(std::span<const GenerativeUnit> units, RegularizerKind kind);

/// The frozen baseline with generative units spliced in after their layers.
/// Channels outside every unit pass through untouched.
class GenerativeNetwork {
 public:
  GenerativeNetwork(Checkpoint baseline, std::vector<SignificanceMask> masks, std::vector<GenerativeUnit> units);

  const Checkpoint& baseline() const noexcept { return baseline_; }
  const std::vector<SignificanceMask>& masks() const noexcept { return masks_; }
  const std::vector<GenerativeUnit>& units() const noexcept { return units_; }
  std::size_t unit_parameter_count() const;

  // Tap i is the activation consumed by layer i + 1, i.e. after any unit at layer i.
  NetworkOutput eval(const Tensor& inputs, std::span<const std::size_t> taps = {}) const;
  Tensor logits(const Tensor& inputs) const { return eval(inputs).logits; }
  Tensor extract_features(const FeatureTap& tap, const Tensor& inputs) const;

  // Same baseline and masks, new unit parameters (one ParamSet per unit).
  GenerativeNetwork with_unit_params(std::vector<ParamSet> params) const;

 private:
  Checkpoint baseline_;
  std::vector<SignificanceMask> masks_;
  std::vector<GenerativeUnit> units_;
};

// Validates layer/mask agreement and the parameter budget (units < 25% of the baseline).
GenerativeNetwork assemble_gen_net(Checkpoint ckpt, std::vector<SignificanceMask> masks,
                                   std::vector<GenerativeUnit> units);

struct ObjectiveGradient {
  double value = 0.0;      // lambda * rho + mean cross-entropy
  double data_loss = 0.0;  // mean cross-entropy alone
  std::vector<ParamSet> unit_gradients;
};

double objective(const GenerativeNetwork& net, const LabeledBatch& batch, const RegularizationSpec& reg);
ObjectiveGradient objective_gradient(const GenerativeNetwork& net, const LabeledBatch& batch,
                                     const RegularizationSpec& reg);

/// Clean training images plus the sensor models to mix. Each epoch the sample
/// at shuffled position p is seen through mixture[p % mixture.size()]: equal
/// shares per model, and the model carries no information about the label.
struct UnitTrainingSet {
  LabeledBatch clean;
  std::vector<DegradationChain> mixture;
};

// Minimizes the objective over the unit parameters only; the baseline is never written.
GenerativeNetwork train_units(const GenerativeNetwork& net, const UnitTrainingSet& train_set,
                              const RegularizationSpec& reg, const TrainHyper& hyper);

// GSGU section: "GSGU", u16 unit count, then per unit u32 layer index, u32
// channel count, u32 channels..., u32 width, f64 little-endian parameters.
void encode_units(std::span<const GenerativeUnit> units, ByteWriter& out);
std::vector<GenerativeUnit> decode_units(ByteReader& in, const NetworkSpec& spec);

// Checkpoint file (GSCK) immediately followed by the GSGU section.
std::vector<std::uint8_t> encode_generative(const GenerativeNetwork& net);
GenerativeNetwork decode_generative(std::span<const std::uint8_t> bytes, const std::string& context);
void save_generative(const GenerativeNetwork& net, const std::filesystem::path& path);
GenerativeNetwork load_generative(const std::filesystem::path& path);

}  // namespace gensense
