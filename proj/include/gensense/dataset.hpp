#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gensense/network.hpp"
#include "gensense/prng.hpp"

namespace gensense {

enum class ShapeClass { disk = 0, square = 1, cross = 2, triangle = 3 };
inline constexpr std::size_t kShapeClassCount = 4;

struct SplitSizes {
  std::size_t train = 2000;
  std::size_t rank_eval = 400;
  std::size_t head_train = 400;
  std::size_t test = 400;

  std::size_t total() const noexcept { return train + rank_eval + head_train + test; }
};

struct DatasetManifest {
  std::string name = "shapes";
  std::size_t num_classes = 4;
  std::size_t image_size = 32;  // square, single channel
  SplitSizes splits;
  std::uint64_t seed = 7;
  std::string modality_tag = "RGB";

  void validate() const;
  std::string describe() const;
};

/// Labelled images of one split plus the global sample indices they were rendered from.
struct Split {
  LabeledBatch data;
  std::vector<std::size_t> indices;
};

struct DatasetSplits {
  Split train;
  Split rank_eval;
  Split head_train;
  Split test;
};

// Throws Error when any sample index is shared between split roles.
void check_split_hygiene(const DatasetSplits& splits);

// Renders one anti-aliased shape, u8-quantized, values in [0, 1]; shape (1, size, size).
Tensor render_shape(ShapeClass cls, std::size_t size, SplitMix64& rng);

// Class labels cycle 0..num_classes-1 within every split; sample i draws from
// the stream derived from (seed, i).
DatasetSplits generate_dataset(const DatasetManifest& manifest);

// IDX (MNIST) encoding: big-endian header, magic 0x00000803 for u8 image
// tensors (n, h, w) and 0x00000801 for u8 label vectors.
std::vector<std::uint8_t> encode_idx_images(const Tensor& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const int> labels);
Tensor decode_idx_images(std::span<const std::uint8_t> bytes, const std::string& context);
std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes, const std::string& context);

void write_split(const std::filesystem::path& dir, const std::string& name, const Split& split);
Split read_split(const std::filesystem::path& dir, const std::string& name, std::size_t first_index);

void write_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest, const DatasetSplits& splits);
DatasetSplits read_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest);

}  // namespace gensense
