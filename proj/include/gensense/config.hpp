#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gensense/baseline.hpp"
#include "gensense/dataset.hpp"
#include "gensense/degrade.hpp"
#include "gensense/generative.hpp"
#include "gensense/susceptibility.hpp"
#include "gensense/transfer.hpp"

namespace gensense {

/// Every knob of a run. Text form is one `key = value` per line with `#`
/// comments; the same keys are accepted as `--key value` on the command line.
struct RunConfig {
  std::filesystem::path out_dir = "gensense-out";
  std::uint64_t seed = 7;
  DatasetManifest data;
  std::vector<double> sigma_levels{0, 1, 2, 3};
  std::optional<double> rank_sigma;  // default: largest level
  std::string primary_tag = "visible";
  std::optional<ModalitySpec> modality = ModalitySpec{};  // second-modality rows; nullopt disables them
  std::string modality_tag = "shifted";
  MaskRule mask = MaskRule::top_k(8);
  std::size_t unit_width = 8;
  RegularizationSpec reg{RegularizerKind::l2, 5e-4};
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  int baseline_epochs = 30;
  int unit_epochs = 20;
  std::optional<double> unit_lr;  // default: lr
  HeadHyper head;
  std::optional<std::size_t> ranking_layer;    // default: second conv
  std::optional<std::size_t> extractor_layer;  // default: penultimate dense
  std::size_t threads = 0;                     // 0: GENSENSE_THREADS

  static const std::vector<std::string_view>& keys();
  void set(std::string_view key, std::string_view value);
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  // Keys in fixed order, unset optional ones omitted; equal configs give equal text.
  std::string canonical() const;
  std::uint64_t hash() const;
  void validate() const;

  double effective_rank_sigma() const;
  TrainHyper baseline_hyper() const;
  TrainHyper unit_hyper() const;
  DatasetManifest manifest() const;  // data settings with the derived dataset seed
  std::uint64_t baseline_seed() const;
  std::uint64_t unit_seed() const;
};

}  // namespace gensense
