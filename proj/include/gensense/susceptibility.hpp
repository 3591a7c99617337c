#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gensense/baseline.hpp"
#include "gensense/degrade.hpp"

namespace gensense {

struct SusceptibilityReport {
  std::size_t layer_index = 0;
  std::size_t channel_count = 0;
  double baseline_accuracy = 0.0;  // A_high
  // Accuracy drop per unit of analysis: one entry per channel, or per
  // contiguous channel group when group_size > 1.
  std::vector<double> delta_phi;
  std::size_t group_size = 1;
  std::string degradation = "identity";
  std::string eval_set_id;

  bool clustered() const noexcept { return group_size > 1; }
  // Channels [first, last) covered by entry i.
  std::pair<std::size_t, std::size_t> group_range(std::size_t i) const;

  std::string serialize() const;
  static SusceptibilityReport parse(std::string_view text);

  friend bool operator==(const SusceptibilityReport&, const SusceptibilityReport&) = default;
};

/// Holds the clean and degraded activations of an evaluation set at one layer
/// and answers "accuracy if channels S took their degraded values".
class SwapEvaluator {
 public:
  SwapEvaluator(const Checkpoint& ckpt, std::size_t layer_index, const LabeledBatch& eval_set,
                const Tensor& degraded_inputs);
  SwapEvaluator(const Checkpoint& ckpt, std::size_t layer_index, const LabeledBatch& eval_set,
                std::span<const DegradationSpec> degradation);

  std::size_t channel_count() const noexcept { return clean_.dim(1); }
  double clean_accuracy() const noexcept { return clean_accuracy_; }
  double accuracy_with_swap(std::span<const std::size_t> channels) const;

 private:
  const Checkpoint& ckpt_;
  std::size_t layer_;
  const std::vector<int>& labels_;
  Tensor clean_;
  Tensor degraded_;
  double clean_accuracy_ = 0.0;
};

double swap_accuracy(const Checkpoint& ckpt, std::size_t layer_index, std::span<const std::size_t> channels,
                     const LabeledBatch& eval_set, const DegradationSpec& degradation);

// Worker count from GENSENSE_THREADS, defaulting to 1.
std::size_t ranking_threads();

// threads == 0 reads GENSENSE_THREADS. Results do not depend on the thread count.
SusceptibilityReport compute_delta_phi(const SwapEvaluator& evaluator, std::size_t layer_index,
                                       std::size_t group_size, std::size_t threads = 0);
SusceptibilityReport compute_delta_phi(const Checkpoint& ckpt, std::size_t layer_index, const LabeledBatch& eval_set,
                                       const DegradationSpec& degradation, std::size_t threads = 0);
SusceptibilityReport rank_clusters(const Checkpoint& ckpt, std::size_t layer_index, const LabeledBatch& eval_set,
                                   const DegradationSpec& degradation, std::int64_t group_size,
                                   std::size_t threads = 0);

struct MaskRule {
  enum class Kind { threshold, top_k } kind = Kind::top_k;
  double tau = 0.0;
  std::int64_t k = 0;

  static MaskRule threshold(double tau) { return {Kind::threshold, tau, 0}; }
  static MaskRule top_k(std::int64_t k) { return {Kind::top_k, 0.0, k}; }
  std::string describe() const;
};

struct SignificanceMask {
  std::size_t layer_index = 0;
  std::vector<bool> selected;
  MaskRule rule;

  std::vector<std::size_t> channels() const;
  std::size_t count() const;
};

// threshold: selected where delta_phi > tau. top_k: the k largest entries,
// ties to the lower index. Cluster entries expand to all member channels.
SignificanceMask threshold_mask(const SusceptibilityReport& report, const MaskRule& rule);

void save_report(const SusceptibilityReport& report, const std::filesystem::path& path);
SusceptibilityReport load_report(const std::filesystem::path& path);

}  // namespace gensense
