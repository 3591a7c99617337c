#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gensense/baseline.hpp"
#include "gensense/degrade.hpp"
#include "gensense/generative.hpp"

namespace gensense {

/// Softmax classifier on deep features: logits = features * weight + bias.
struct LinearHead {
  Tensor weight;  // (feature_dim, num_classes)
  Tensor bias;    // (num_classes)

  std::size_t feature_dim() const { return weight.dim(0); }
  std::size_t num_classes() const { return weight.dim(1); }
  Tensor logits(const Tensor& features) const;
  std::uint64_t hash() const;

  friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

struct HeadHyper {
  double lr = 0.1;
  int epochs = 500;
};

// Full-batch gradient descent on mean cross-entropy from a zero initialization.
LinearHead fit_linear_head(const Tensor& features, std::span<const int> labels, std::size_t num_classes,
                           const HeadHyper& hyper);

using FeatureExtractor = std::function<Tensor(const Tensor& inputs)>;
FeatureExtractor baseline_extractor(const Checkpoint& ckpt, FeatureTap tap);
FeatureExtractor generative_extractor(const GenerativeNetwork& net, FeatureTap tap);

struct EvalRow {
  std::string method;  // "baseline" or "generative_sensing"
  std::string modality;
  std::vector<double> accuracies;
  double average = 0.0;
};

/// Accuracy table: one column per degradation level plus the row average.
struct EvalTable {
  std::vector<std::string> level_names;
  std::vector<EvalRow> rows;

  // Orders rows by (modality, method) with the baseline first in each modality.
  void sort_rows();
  // Header "method,modality,<levels...>,avg"; 4 decimals.
  std::string to_csv() const;
  static EvalTable parse_csv(std::string_view text);
};

// Applies each level's degradation chain to the test images, extracts features
// and classifies them with `head`.
EvalRow eval_pipeline(const FeatureExtractor& extractor, const LinearHead& head, const LabeledBatch& test_set,
                      std::span<const DegradationChain> levels, std::string method, std::string modality);

double row_average(std::span<const double> accuracies);
// 100 * (1 - avg / clean_acc)
double relative_drop(double avg, double clean_acc);
// 100 * (gen_avg - base_avg) / base_avg
double relative_improvement(double gen_avg, double base_avg);
// Share of the baseline's gap between clean accuracy and row average closed by the generative row.
double gap_recovery(double gen_avg, double base_avg, double base_clean);

}  // namespace gensense
