#include "gensense/transfer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

#include "gensense/error.hpp"
#include "gensense/text.hpp"

namespace gensense {

Tensor LinearHead::logits(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != feature_dim()) {
    throw ShapeError("features " + shape_string(features.shape()) + " do not match a head over " +
                     std::to_string(feature_dim()) + " features");
  }
  const std::size_t n = features.dim(0), d = feature_dim(), c = num_classes();
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * c;
    for (std::size_t k = 0; k < c; ++k) row[k] = bias[k];
    for (std::size_t j = 0; j < d; ++j) {
      const double x = features[i * d + j];
      const double* w = weight.data() + j * c;
      for (std::size_t k = 0; k < c; ++k) row[k] += x * w[k];
    }
  }
  return out;
}

std::uint64_t LinearHead::hash() const { return params_hash({LayerParams{weight, bias}}); }

LinearHead fit_linear_head(const Tensor& features, std::span<const int> labels, std::size_t num_classes,
                           const HeadHyper& hyper) {
  if (features.rank() != 2) throw ShapeError("head features must be (samples, dim)");
  if (features.dim(0) != labels.size()) {
    throw ShapeError(std::to_string(features.dim(0)) + " feature rows but " + std::to_string(labels.size()) +
                     " labels");
  }
  if (num_classes < 2) throw ConfigError("a linear head needs at least two classes");
  const std::size_t n = features.dim(0), d = features.dim(1);
  LinearHead head{Tensor({d, num_classes}), Tensor({num_classes})};
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const Tensor g = crossentropy_gradient(head.logits(features), labels);
    Tensor gw({d, num_classes});
    Tensor gb({num_classes});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < num_classes; ++k) gb[k] += g[i * num_classes + k];
      for (std::size_t j = 0; j < d; ++j) {
        const double x = features[i * d + j];
        for (std::size_t k = 0; k < num_classes; ++k) gw[j * num_classes + k] += x * g[i * num_classes + k];
      }
    }
    for (std::size_t k = 0; k < gw.size(); ++k) head.weight[k] -= hyper.lr * gw[k];
    for (std::size_t k = 0; k < gb.size(); ++k) head.bias[k] -= hyper.lr * gb[k];
    if (!head.weight.all_finite()) {
      throw DivergenceError("linear head training diverged in epoch " + std::to_string(epoch), epoch);
    }
  }
  return head;
}

FeatureExtractor baseline_extractor(const Checkpoint& ckpt, FeatureTap tap) {
  check_tap(ckpt.spec, tap);
  return [&ckpt, tap](const Tensor& inputs) { return extract_features(ckpt, tap, inputs); };
}

FeatureExtractor generative_extractor(const GenerativeNetwork& net, FeatureTap tap) {
  check_tap(net.baseline().spec, tap);
  return [&net, tap](const Tensor& inputs) { return net.extract_features(tap, inputs); };
}

void EvalTable::sort_rows() {
  std::stable_sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
    const auto rank = [](const EvalRow& r) { return r.method == "baseline" ? 0 : 1; };
    if (a.modality != b.modality) return a.modality < b.modality;
    if (rank(a) != rank(b)) return rank(a) < rank(b);
    return a.method < b.method;
  });
}

std::string EvalTable::to_csv() const {
  std::ostringstream os;
  os << "method,modality";
  for (const auto& name : level_names) os << ',' << name;
  os << ",avg\n";
  for (const auto& row : rows) {
    if (row.accuracies.size() != level_names.size()) throw ShapeError("table row length does not match its levels");
    os << row.method << ',' << row.modality;
    for (double a : row.accuracies) os << ',' << format_fixed(a, 4);
    os << ',' << format_fixed(row.average, 4) << '\n';
  }
  return os.str();
}

EvalTable EvalTable::parse_csv(std::string_view text) {
  EvalTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  const auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream cs(s);
    while (std::getline(cs, cell, ',')) out.push_back(std::string(trim(cell)));
    return out;
  };
  if (!std::getline(in, line)) throw FormatError("table: empty CSV");
  const auto header = split(line);
  if (header.size() < 4 || header[0] != "method" || header[1] != "modality" || header.back() != "avg") {
    throw FormatError("table: unexpected header '" + line + "'");
  }
  table.level_names.assign(header.begin() + 2, header.end() - 1);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw FormatError("table: row has wrong column count: '" + line + "'");
    EvalRow row{cells[0], cells[1], {}, parse_double(cells.back(), "avg")};
    for (std::size_t i = 2; i + 1 < cells.size(); ++i) row.accuracies.push_back(parse_double(cells[i], "accuracy"));
    table.rows.push_back(std::move(row));
  }
  return table;
}

EvalRow eval_pipeline(const FeatureExtractor& extractor, const LinearHead& head, const LabeledBatch& test_set,
                      std::span<const DegradationChain> levels, std::string method, std::string modality) {
  if (levels.empty()) throw ConfigError("evaluation needs at least one degradation level");
  EvalRow row{std::move(method), std::move(modality), {}, 0.0};
  for (const auto& chain : levels) {
    const Tensor features = extractor(degrade_batch(test_set.inputs, chain));
    if (features.rank() != 2 || features.dim(1) != head.feature_dim()) {
      throw ShapeError("extractor yields " + shape_string(features.shape()) + " features, head expects " +
                       std::to_string(head.feature_dim()));
    }
    row.accuracies.push_back(accuracy(head.logits(features), test_set.labels));
  }
  row.average = row_average(row.accuracies);
  return row;
}

double row_average(std::span<const double> accuracies) {
  if (accuracies.empty()) throw ConfigError("row_average of an empty row");
  double sum = 0.0;
  for (double a : accuracies) sum += a;
  return sum / static_cast<double>(accuracies.size());
}

double relative_drop(double avg, double clean_acc) {
  if (!(clean_acc > 0.0)) throw ConfigError("relative_drop needs a positive clean accuracy");
  return 100.0 * (1.0 - avg / clean_acc);
}

double relative_improvement(double gen_avg, double base_avg) {
  if (!(base_avg > 0.0)) throw ConfigError("relative_improvement needs a positive baseline average");
  return 100.0 * (gen_avg - base_avg) / base_avg;
}

double gap_recovery(double gen_avg, double base_avg, double base_clean) {
  const double gap = base_clean - base_avg;
  if (!(gap > 0.0)) throw ConfigError("gap_recovery needs a baseline that loses accuracy under degradation");
  return (gen_avg - base_avg) / gap;
}

}  // namespace gensense
