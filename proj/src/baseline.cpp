#include "gensense/baseline.hpp"

#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gensense/error.hpp"
#include "gensense/prng.hpp"
#include "gensense/text.hpp"

namespace gensense {

namespace {

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitMix64 rng = SplitMix64::derive(seed, epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

Shape parse_dims(std::string_view text, const std::string& context) {
  Shape shape;
  if (text == "-") return shape;
  std::size_t start = 0;
  while (true) {
    const auto x = text.find('x', start);
    shape.push_back(parse_u64(text.substr(start, x - start), context));
    if (x == std::string_view::npos) break;
    start = x + 1;
  }
  return shape;
}

std::string dims_string(const Shape& shape) {
  if (shape.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

}  // namespace

std::uint64_t params_hash(const ParamSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&](const Tensor& t) {
    for (double v : t.values()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i, bits >>= 8) {
        h ^= bits & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  };
  for (const auto& p : params) {
    mix(p.weight);
    mix(p.bias);
  }
  return h;
}

Checkpoint train_baseline(const NetworkSpec& spec, const LabeledBatch& dataset, const TrainHyper& hyper,
                          std::string dataset_id) {
  spec.validate();
  const std::size_t n = dataset.labels.size();
  if (n == 0 || dataset.inputs.dim(0) != n) throw ShapeError("training set inputs and labels disagree in length");
  for (int y : dataset.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes) {
      throw ConfigError("training label " + std::to_string(y) + " outside the network's " +
                        std::to_string(spec.num_classes) + " classes");
    }
  }
  if (hyper.batch_size == 0) throw ConfigError("batch_size must be positive");

  Checkpoint ckpt{spec, init_params(spec, hyper.seed), {hyper.seed, hyper.epochs, 0.0, std::move(dataset_id)}};
  ParamSet velocity = zeros_like(ckpt.params);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto order = shuffled_order(n, hyper.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += hyper.batch_size) {
      const std::size_t count = std::min(hyper.batch_size, n - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      LabeledBatch batch{gather_rows(dataset.inputs, idx), {}};
      for (auto i : idx) batch.labels.push_back(dataset.labels[i]);
      const auto lg = backward(spec, ckpt.params, batch);
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("baseline training diverged (non-finite loss) in epoch " + std::to_string(epoch),
                              epoch);
      }
      loss_sum += lg.loss * static_cast<double>(count);
      sgd_step(ckpt.params, lg.gradients, hyper.lr, hyper.momentum, velocity);
    }
    ckpt.meta.final_train_loss = loss_sum / static_cast<double>(n);
    if (hyper.on_epoch) hyper.on_epoch(epoch, ckpt.meta.final_train_loss);
  }
  return ckpt;
}

void check_tap(const NetworkSpec& spec, const FeatureTap& tap) {
  const auto shapes = spec.activation_shapes();
  if (tap.layer_index >= spec.layers.size()) {
    throw ShapeError("tap layer " + std::to_string(tap.layer_index) + " out of range for " +
                     std::to_string(spec.layers.size()) + " layers");
  }
  const auto& shape = shapes[tap.layer_index + 1];
  if (tap.role == TapRole::ranking && shape.size() != 3) {
    throw ShapeError("ranking tap at layer " + std::to_string(tap.layer_index) +
                     " must produce a channel-indexed activation, got " + shape_string(shape));
  }
  if (tap.role == TapRole::extractor && shape.size() != 1) {
    throw ShapeError("extractor tap at layer " + std::to_string(tap.layer_index) +
                     " must produce a feature vector, got " + shape_string(shape));
  }
}

FeatureTap default_ranking_tap(const NetworkSpec& spec) {
  std::size_t convs = 0;
  std::size_t last = spec.layers.size();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind != LayerKind::conv) continue;
    last = i;
    if (++convs == 2) return {i, TapRole::ranking};
  }
  if (last == spec.layers.size()) throw ShapeError("network has no convolution layer to tap");
  return {last, TapRole::ranking};
}

FeatureTap default_extractor_tap(const NetworkSpec& spec) {
  std::vector<std::size_t> dense;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::dense) dense.push_back(i);
  }
  if (dense.size() < 2) throw ShapeError("network needs two dense layers for the default extractor tap");
  return {dense[dense.size() - 2], TapRole::extractor};
}

Tensor extract_features(const Checkpoint& ckpt, const FeatureTap& tap, const Tensor& inputs) {
  check_tap(ckpt.spec, tap);
  const std::size_t layer = tap.layer_index;
  auto out = eval_network(ckpt.spec, ckpt.params, inputs, std::span(&layer, 1));
  return std::move(out.taps.front());
}

void encode_checkpoint(const Checkpoint& ckpt, ByteWriter& out) {
  check_params(ckpt.spec, ckpt.params);
  std::ostringstream desc;
  desc << ckpt.spec.describe();
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    desc << "param " << i << ' ' << dims_string(ckpt.params[i].weight.shape()) << ' '
         << dims_string(ckpt.params[i].bias.shape()) << '\n';
  }
  desc << "meta seed " << ckpt.meta.seed << '\n'
       << "meta epochs " << ckpt.meta.epochs << '\n'
       << "meta final_train_loss " << format_double(ckpt.meta.final_train_loss) << '\n'
       << "meta dataset_id " << ckpt.meta.dataset_id << '\n';
  const std::string text = desc.str();
  out.raw("GSCK");
  out.u16le(kCheckpointVersion);
  out.u32le(static_cast<std::uint32_t>(text.size()));
  out.raw(text);
  for (const auto& p : ckpt.params) {
    for (double v : p.weight.values()) out.f64le(v);
    for (double v : p.bias.values()) out.f64le(v);
  }
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  encode_checkpoint(ckpt, w);
  return std::move(w).take();
}

Checkpoint decode_checkpoint(ByteReader& in) {
  const std::string magic = in.raw(4);
  if (magic != "GSCK") throw FormatError("bad checkpoint magic: expected \"GSCK\", found \"" + magic + "\"");
  const auto version = in.u16le();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version: expected " + std::to_string(kCheckpointVersion) +
                      ", found " + std::to_string(version));
  }
  const std::string text = in.raw(in.u32le());

  Checkpoint ckpt;
  std::string net_text;
  std::vector<std::pair<Shape, Shape>> declared;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "param") {
      std::size_t index = 0;
      std::string w, b;
      if (!(ls >> index >> w >> b) || index != declared.size()) {
        throw FormatError("checkpoint descriptor: malformed line '" + line + "'");
      }
      declared.emplace_back(parse_dims(w, "param shape"), parse_dims(b, "param shape"));
    } else if (word == "meta") {
      std::string key, value;
      ls >> key;
      std::getline(ls >> std::ws, value);
      if (key == "seed") ckpt.meta.seed = parse_u64(value, "meta seed");
      else if (key == "epochs") ckpt.meta.epochs = static_cast<int>(parse_i64(value, "meta epochs"));
      else if (key == "final_train_loss") ckpt.meta.final_train_loss = parse_double(value, "meta final_train_loss");
      else if (key == "dataset_id") ckpt.meta.dataset_id = value;
      else throw FormatError("checkpoint descriptor: unknown meta key '" + key + "'");
    } else {
      net_text += line + '\n';
    }
  }
  ckpt.spec = NetworkSpec::parse(net_text);

  const auto shapes = ckpt.spec.activation_shapes();
  if (declared.size() != ckpt.spec.layers.size()) {
    throw ShapeError("checkpoint declares parameters for " + std::to_string(declared.size()) +
                     " layers, network has " + std::to_string(ckpt.spec.layers.size()));
  }
  for (std::size_t i = 0; i < declared.size(); ++i) {
    const auto& layer = ckpt.spec.layers[i];
    const auto expected = layer.has_params() ? layer_param_shapes(layer, shapes[i]) : ParamShapes{};
    if (declared[i].first != expected.weight || declared[i].second != expected.bias) {
      throw ShapeError("checkpoint layer " + std::to_string(i) + " (" + std::string(layer_name(layer.kind)) +
                       "): declared parameters " + dims_string(declared[i].first) + "/" +
                       dims_string(declared[i].second) + " but the network needs " + dims_string(expected.weight) +
                       "/" + dims_string(expected.bias));
    }
    LayerParams p;
    if (layer.has_params()) {
      p.weight = Tensor(expected.weight);
      for (auto& v : p.weight.values()) v = in.f64le();
      p.bias = Tensor(expected.bias);
      for (auto& v : p.bias.values()) v = in.f64le();
    }
    ckpt.params.push_back(std::move(p));
  }
  return ckpt;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader in(bytes, context);
  Checkpoint ckpt = decode_checkpoint(in);
  if (!in.at_end()) {
    throw FormatError(context + ": " + std::to_string(in.remaining()) + " unexpected trailing bytes");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace gensense
