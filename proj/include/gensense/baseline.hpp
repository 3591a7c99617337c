#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gensense/bytes.hpp"
#include "gensense/network.hpp"

namespace gensense {

struct TrainHyper {
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  // called after every epoch with the sample-weighted mean training loss
  std::function<void(int epoch, double loss)> on_epoch;
};

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  double final_train_loss = 0.0;
  std::string dataset_id;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  NetworkSpec spec;
  ParamSet params;
  CheckpointMeta meta;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Bitwise digest of a parameter set.
std::uint64_t params_hash(const ParamSet& params);

// Minibatch SGD with momentum on clean data. Sample order per epoch comes from
// the stream derived from (seed, epoch); initialization uses `seed` directly.
Checkpoint train_baseline(const NetworkSpec& spec, const LabeledBatch& dataset, const TrainHyper& hyper,
                          std::string dataset_id);

enum class TapRole { ranking, extractor };

struct FeatureTap {
  std::size_t layer_index = 0;
  TapRole role = TapRole::ranking;
};

// Ranking taps must yield (channels, h, w) activations, extractor taps flat vectors.
void check_tap(const NetworkSpec& spec, const FeatureTap& tap);

// Second convolution output, and the output of the penultimate dense layer.
FeatureTap default_ranking_tap(const NetworkSpec& spec);
FeatureTap default_extractor_tap(const NetworkSpec& spec);

Tensor extract_features(const Checkpoint& ckpt, const FeatureTap& tap, const Tensor& inputs);

// GSCK layout: "GSCK", u16 version, u32 descriptor length, UTF-8 descriptor
// (network, declared parameter shapes, meta), then every weight and bias as
// little-endian f64 in layer order.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void encode_checkpoint(const Checkpoint& ckpt, ByteWriter& out);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(ByteReader& in);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gensense
