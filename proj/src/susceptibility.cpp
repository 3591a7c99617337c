#include "gensense/susceptibility.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <numeric>
#include <sstream>
#include <thread>

#include "gensense/error.hpp"
#include "gensense/text.hpp"

namespace gensense {

namespace {

Tensor activation_at(const Checkpoint& ckpt, std::size_t layer, const Tensor& inputs) {
  auto out = eval_network(ckpt.spec, ckpt.params, inputs, std::span(&layer, 1));
  return std::move(out.taps.front());
}

}  // namespace

std::pair<std::size_t, std::size_t> SusceptibilityReport::group_range(std::size_t i) const {
  const std::size_t first = i * group_size;
  return {first, std::min(channel_count, first + group_size)};
}

std::string SusceptibilityReport::serialize() const {
  std::ostringstream os;
  os << "# susceptibility report\n"
     << "layer_index = " << layer_index << '\n'
     << "channels = " << channel_count << '\n'
     << "baseline_accuracy = " << format_double(baseline_accuracy) << '\n'
     << "degradation = " << degradation << '\n'
     << "eval_set_id = " << eval_set_id << '\n'
     << "unit_of_analysis = " << (clustered() ? "cluster(" + std::to_string(group_size) + ")" : "single_channel")
     << '\n'
     << (clustered() ? "group" : "channel") << ",delta_phi\n";
  for (std::size_t i = 0; i < delta_phi.size(); ++i) os << i << ',' << format_double(delta_phi[i]) << '\n';
  return os.str();
}

SusceptibilityReport SusceptibilityReport::parse(std::string_view text) {
  SusceptibilityReport r;
  std::istringstream in{std::string(text)};
  std::string line;
  bool in_records = false;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (!in_records) {
      if (t == "channel,delta_phi" || t == "group,delta_phi") {
        in_records = true;
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) throw FormatError("report: malformed header line '" + line + "'");
      const auto key = trim(t.substr(0, eq));
      const auto value = trim(t.substr(eq + 1));
      if (key == "layer_index") r.layer_index = parse_u64(value, "layer_index");
      else if (key == "channels") r.channel_count = parse_u64(value, "channels");
      else if (key == "baseline_accuracy") r.baseline_accuracy = parse_double(value, "baseline_accuracy");
      else if (key == "degradation") r.degradation = std::string(value);
      else if (key == "eval_set_id") r.eval_set_id = std::string(value);
      else if (key == "unit_of_analysis") {
        if (value == "single_channel") {
          r.group_size = 1;
        } else if (value.starts_with("cluster(") && value.ends_with(")")) {
          r.group_size = parse_u64(value.substr(8, value.size() - 9), "cluster size");
        } else {
          throw FormatError("report: unknown unit_of_analysis '" + std::string(value) + "'");
        }
      } else {
        throw FormatError("report: unknown key '" + std::string(key) + "'");
      }
    } else {
      const auto comma = t.find(',');
      if (comma == std::string_view::npos) throw FormatError("report: malformed record '" + line + "'");
      if (parse_u64(t.substr(0, comma), "record index") != r.delta_phi.size()) {
        throw FormatError("report: records out of order at '" + line + "'");
      }
      r.delta_phi.push_back(parse_double(t.substr(comma + 1), "delta_phi"));
    }
  }
  if (r.group_size == 0 || r.delta_phi.size() != (r.channel_count + r.group_size - 1) / r.group_size) {
    throw FormatError("report: record count does not match channels and unit of analysis");
  }
  return r;
}

SwapEvaluator::SwapEvaluator(const Checkpoint& ckpt, std::size_t layer_index, const LabeledBatch& eval_set,
                             const Tensor& degraded_inputs)
    : ckpt_(ckpt), layer_(layer_index), labels_(eval_set.labels) {
  check_tap(ckpt.spec, {layer_index, TapRole::ranking});
  if (degraded_inputs.shape() != eval_set.inputs.shape()) {
    throw ShapeError("degraded inputs " + shape_string(degraded_inputs.shape()) + " do not match eval set " +
                     shape_string(eval_set.inputs.shape()));
  }
  clean_ = activation_at(ckpt, layer_index, eval_set.inputs);
  degraded_ = activation_at(ckpt, layer_index, degraded_inputs);
  clean_accuracy_ = accuracy(resume_network(ckpt.spec, ckpt.params, clean_, layer_), labels_);
}

SwapEvaluator::SwapEvaluator(const Checkpoint& ckpt, std::size_t layer_index, const LabeledBatch& eval_set,
                             std::span<const DegradationSpec> degradation)
    : SwapEvaluator(ckpt, layer_index, eval_set, degrade_batch(eval_set.inputs, degradation)) {}

double SwapEvaluator::accuracy_with_swap(std::span<const std::size_t> channels) const {
  if (channels.empty()) return clean_accuracy_;
  const std::size_t batch = clean_.dim(0), c = clean_.dim(1);
  const std::size_t plane = clean_.dim(2) * clean_.dim(3);
  Tensor mixed = clean_;
  for (auto ch : channels) {
    if (ch >= c) {
      throw ShapeError("channel " + std::to_string(ch) + " out of range for " + std::to_string(c) +
                       " channels at layer " + std::to_string(layer_));
    }
    for (std::size_t n = 0; n < batch; ++n) {
      std::memcpy(mixed.data() + (n * c + ch) * plane, degraded_.data() + (n * c + ch) * plane,
                  plane * sizeof(double));
    }
  }
  return accuracy(resume_network(ckpt_.spec, ckpt_.params, std::move(mixed), layer_), labels_);
}

double swap_accuracy(const Checkpoint& ckpt, std::size_t layer_index, std::span<const std::size_t> channels,
                     const LabeledBatch& eval_set, const DegradationSpec& degradation) {
  return SwapEvaluator(ckpt, layer_index, eval_set, std::span(&degradation, 1)).accuracy_with_swap(channels);
}

std::size_t ranking_threads() {
  if (const char* env = std::getenv("GENSENSE_THREADS")) {
    const auto n = parse_u64(env, "GENSENSE_THREADS");
    return n == 0 ? 1 : static_cast<std::size_t>(n);
  }
  return 1;
}

SusceptibilityReport compute_delta_phi(const SwapEvaluator& evaluator, std::size_t layer_index,
                                       std::size_t group_size, std::size_t threads) {
  if (group_size < 1) throw ConfigError("cluster group size must be at least 1");
  const std::size_t channels = evaluator.channel_count();
  if (group_size > channels) {
    throw ConfigError("cluster group size " + std::to_string(group_size) + " exceeds " + std::to_string(channels) +
                      " channels");
  }
  SusceptibilityReport report;
  report.layer_index = layer_index;
  report.channel_count = channels;
  report.group_size = group_size;
  report.baseline_accuracy = evaluator.clean_accuracy();
  report.delta_phi.assign((channels + group_size - 1) / group_size, 0.0);

  // Each entry is written to its own slot, so assembly order cannot change the result.
  std::atomic<std::size_t> next{0};
  const auto work = [&]() {
    for (std::size_t i = next++; i < report.delta_phi.size(); i = next++) {
      const auto [first, last] = report.group_range(i);
      std::vector<std::size_t> group(last - first);
      std::iota(group.begin(), group.end(), first);
      report.delta_phi[i] = report.baseline_accuracy - evaluator.accuracy_with_swap(group);
    }
  };
  const std::size_t workers = std::min(threads == 0 ? ranking_threads() : threads, report.delta_phi.size());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  return report;
}

SusceptibilityReport compute_delta_phi(const Checkpoint& ckpt, std::size_t layer_index, const LabeledBatch& eval_set,
                                       const DegradationSpec& degradation, std::size_t threads) {
  const SwapEvaluator evaluator(ckpt, layer_index, eval_set, std::span(&degradation, 1));
  auto report = compute_delta_phi(evaluator, layer_index, 1, threads);
  report.degradation = degradation.describe();
  return report;
}

SusceptibilityReport rank_clusters(const Checkpoint& ckpt, std::size_t layer_index, const LabeledBatch& eval_set,
                                   const DegradationSpec& degradation, std::int64_t group_size, std::size_t threads) {
  if (group_size < 1) throw ConfigError("cluster group size must be at least 1");
  const SwapEvaluator evaluator(ckpt, layer_index, eval_set, std::span(&degradation, 1));
  auto report = compute_delta_phi(evaluator, layer_index, static_cast<std::size_t>(group_size), threads);
  report.degradation = degradation.describe();
  return report;
}

std::string MaskRule::describe() const {
  return kind == Kind::threshold ? "threshold(" + format_double(tau) + ")" : "top_k(" + std::to_string(k) + ")";
}

std::vector<std::size_t> SignificanceMask::channels() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < selected.size(); ++c) {
    if (selected[c]) out.push_back(c);
  }
  return out;
}

std::size_t SignificanceMask::count() const { return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), true)); }

SignificanceMask threshold_mask(const SusceptibilityReport& report, const MaskRule& rule) {
  if (report.delta_phi.empty()) throw ConfigError("cannot build a mask from an empty report");
  if (rule.kind == MaskRule::Kind::threshold && !std::isfinite(rule.tau)) {
    throw ConfigError("mask threshold must be finite");
  }
  if (rule.kind == MaskRule::Kind::top_k && rule.k < 0) throw ConfigError("top_k count must be non-negative");

  const std::size_t entries = report.delta_phi.size();
  std::vector<bool> entry_selected(entries, false);
  if (rule.kind == MaskRule::Kind::threshold) {
    for (std::size_t i = 0; i < entries; ++i) entry_selected[i] = report.delta_phi[i] > rule.tau;
  } else {
    std::vector<std::size_t> order(entries);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return report.delta_phi[a] > report.delta_phi[b]; });
    const std::size_t k = std::min(static_cast<std::size_t>(rule.k), entries);
    for (std::size_t i = 0; i < k; ++i) entry_selected[order[i]] = true;
  }

  SignificanceMask mask;
  mask.layer_index = report.layer_index;
  mask.rule = rule;
  mask.selected.assign(report.channel_count, false);
  for (std::size_t i = 0; i < entries; ++i) {
    if (!entry_selected[i]) continue;
    const auto [first, last] = report.group_range(i);
    for (std::size_t c = first; c < last; ++c) mask.selected[c] = true;
  }
  return mask;
}

void save_report(const SusceptibilityReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, report.serialize());
}

SusceptibilityReport load_report(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return SusceptibilityReport::parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace gensense
