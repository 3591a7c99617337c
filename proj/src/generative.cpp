#include "gensense/generative.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "gensense/error.hpp"
#include "gensense/prng.hpp"

namespace gensense {

namespace {

Tensor gather_channels(const Tensor& act, std::span<const std::size_t> channels) {
  const std::size_t batch = act.dim(0), c = act.dim(1), plane = act.dim(2) * act.dim(3);
  Tensor out({batch, channels.size(), act.dim(2), act.dim(3)});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t j = 0; j < channels.size(); ++j) {
      std::memcpy(out.data() + (n * channels.size() + j) * plane, act.data() + (n * c + channels[j]) * plane,
                  plane * sizeof(double));
    }
  }
  return out;
}

void scatter_channels(Tensor& act, std::span<const std::size_t> channels, const Tensor& values) {
  const std::size_t batch = act.dim(0), c = act.dim(1), plane = act.dim(2) * act.dim(3);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t j = 0; j < channels.size(); ++j) {
      std::memcpy(act.data() + (n * c + channels[j]) * plane, values.data() + (n * channels.size() + j) * plane,
                  plane * sizeof(double));
    }
  }
}

struct Step {
  bool unit = false;
  std::size_t index = 0;     // layer or unit index
  Tensor input;              // layer steps
  std::vector<Tensor> acts;  // unit steps: forward trace over the selected channels
};

class Propagator {
 public:
  explicit Propagator(const GenerativeNetwork& net) : net_(net) {}

  // `act` is the activation at `position` (network input at 0, output of layer
  // position - 1 otherwise) before any unit at that position is applied.
  Tensor run(Tensor act, std::size_t position, std::vector<Step>* trace, std::span<const std::size_t> taps,
             std::vector<Tensor>* tap_out) const {
    const auto& spec = net_.baseline().spec;
    const auto& params = net_.baseline().params;
    const std::size_t layers = spec.layers.size();
    for (std::size_t pos = position;; ++pos) {
      if (pos > 0) {
        for (std::size_t u = 0; u < net_.units().size(); ++u) {
          if (net_.units()[u].layer_index + 1 == pos) act = apply_unit(u, std::move(act), trace);
        }
        for (std::size_t t = 0; t < taps.size(); ++t) {
          if (taps[t] + 1 == pos) (*tap_out)[t] = act;
        }
      }
      if (pos == layers) break;
      Tensor next = layer_forward(spec.layers[pos], params[pos], act);
      if (trace != nullptr) trace->push_back({false, pos, std::move(act), {}});
      act = std::move(next);
    }
    return act;
  }

  // Accumulates into unit_grads; stops once the earliest unit has been reached.
  void backward(const std::vector<Step>& trace, Tensor grad, std::vector<ParamSet>& unit_grads) const {
    const auto& spec = net_.baseline().spec;
    const auto& params = net_.baseline().params;
    std::size_t first_unit = trace.size();
    for (std::size_t i = 0; i < trace.size(); ++i) {
      if (trace[i].unit) {
        first_unit = i;
        break;
      }
    }
    for (std::size_t i = trace.size(); i-- > first_unit;) {
      const Step& step = trace[i];
      if (!step.unit) {
        grad = layer_backward(spec.layers[step.index], params[step.index], step.input, grad, nullptr);
        continue;
      }
      const auto& unit = net_.units()[step.index];
      const auto layers = unit.layers();
      const Tensor grad_sel = gather_channels(grad, unit.channels);
      Tensor grad_x = backward_trace(layers, unit.params, step.acts, grad_sel, unit_grads[step.index]);
      for (std::size_t k = 0; k < grad_x.size(); ++k) grad_x[k] += grad_sel[k];
      scatter_channels(grad, unit.channels, grad_x);
    }
  }

 private:
  Tensor apply_unit(std::size_t u, Tensor act, std::vector<Step>* trace) const {
    const auto& unit = net_.units()[u];
    const auto layers = unit.layers();
    auto acts = forward_trace(layers, unit.params, gather_channels(act, unit.channels));
    Tensor y = acts.front();
    const Tensor& r = acts.back();
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += r[k];
    scatter_channels(act, unit.channels, y);
    if (trace != nullptr) trace->push_back({true, u, {}, std::move(acts)});
    return act;
  }

  const GenerativeNetwork& net_;
};

void add_regularizer_gradient(const ParamSet& params, const RegularizationSpec& reg, ParamSet& grads) {
  if (reg.lambda == 0.0) return;
  const auto add = [&](const Tensor& p, Tensor& g) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (reg.kind == RegularizerKind::l2) {
        g[i] += reg.lambda * 2.0 * p[i];
      } else if (p[i] != 0.0) {
        g[i] += reg.lambda * (p[i] > 0.0 ? 1.0 : -1.0);
      }
    }
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    add(params[l].weight, grads[l].weight);
    add(params[l].bias, grads[l].bias);
  }
}

ObjectiveGradient objective_from(const GenerativeNetwork& net, Tensor act, std::size_t position,
                                 std::span<const int> labels, const RegularizationSpec& reg) {
  const Propagator prop(net);
  std::vector<Step> trace;
  const Tensor logits = prop.run(std::move(act), position, &trace, {}, nullptr);
  ObjectiveGradient out;
  out.data_loss = loss_crossentropy(logits, labels);
  out.value = out.data_loss + reg.lambda * regularizer(net.units(), reg.kind);
  for (const auto& u : net.units()) out.unit_gradients.push_back(zeros_like(u.params));
  prop.backward(trace, crossentropy_gradient(logits, labels), out.unit_gradients);
  for (std::size_t u = 0; u < net.units().size(); ++u) {
    add_regularizer_gradient(net.units()[u].params, reg, out.unit_gradients[u]);
  }
  return out;
}

void check_reg(const RegularizationSpec& reg) {
  if (!(reg.lambda >= 0.0) || !std::isfinite(reg.lambda)) throw ConfigError("lambda must be a non-negative number");
}

}  // namespace

std::array<LayerSpec, 3> GenerativeUnit::layers() const {
  return {LayerSpec::conv(width, 3), LayerSpec::relu(), LayerSpec::conv(channels.size(), 3)};
}

Tensor GenerativeUnit::apply(const Tensor& x) const {
  const auto l = layers();
  Tensor residual = forward(l, params, x);
  Tensor y = x;
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += residual[k];
  return y;
}

std::size_t default_unit_width(std::size_t selected_channels) { return std::max<std::size_t>(8, selected_channels / 2); }

GenerativeUnit build_generative_unit(const SignificanceMask& mask, std::size_t width, std::uint64_t seed) {
  GenerativeUnit unit;
  unit.layer_index = mask.layer_index;
  unit.channels = mask.channels();
  if (unit.channels.empty()) throw ConfigError("cannot build a generative unit from an empty mask");
  if (width == 0) throw ConfigError("generative unit width must be positive");
  unit.width = width;
  const auto l = unit.layers();
  const std::size_t n = unit.channels.size();
  unit.params = init_layer_params(l, {n, 3, 3}, seed);
  for (auto& v : unit.params[2].weight.values()) v = 0.0;
  for (auto& v : unit.params[2].bias.values()) v = 0.0;
  return unit;
}

RegularizerKind RegularizationSpec::parse_kind(std::string_view text) {
  if (text == "l1") return RegularizerKind::l1;
  if (text == "l2") return RegularizerKind::l2;
  throw ConfigError("unknown regularizer '" + std::string(text) + "' (expected l1 or l2)");
}

double regularizer(const ParamSet& params, RegularizerKind kind) {
  double total = 0.0;
  const auto add = [&](const Tensor& t) {
    for (double v : t.values()) total += kind == RegularizerKind::l2 ? v * v : std::abs(v);
  };
  for (const auto& p : params) {
    add(p.weight);
    add(p.bias);
  }
  return total;
}

double regularizer(std::span<const GenerativeUnit> units, RegularizerKind kind) {
  double total = 0.0;
  for (const auto& u : units) total += regularizer(u.params, kind);
  return total;
}

GenerativeNetwork::GenerativeNetwork(Checkpoint baseline, std::vector<SignificanceMask> masks,
                                     std::vector<GenerativeUnit> units)
    : baseline_(std::move(baseline)), masks_(std::move(masks)), units_(std::move(units)) {
  check_params(baseline_.spec, baseline_.params);
  const auto shapes = baseline_.spec.activation_shapes();
  if (masks_.size() != units_.size()) {
    throw ConfigError(std::to_string(units_.size()) + " generative units for " + std::to_string(masks_.size()) +
                      " masks");
  }
  std::vector<std::set<std::size_t>> claimed(baseline_.spec.layers.size());
  for (std::size_t u = 0; u < units_.size(); ++u) {
    const auto& unit = units_[u];
    const auto& mask = masks_[u];
    if (unit.layer_index != mask.layer_index || unit.channels != mask.channels()) {
      throw ConfigError("generative unit " + std::to_string(u) + " at layer " + std::to_string(unit.layer_index) +
                        " does not match its mask at layer " + std::to_string(mask.layer_index));
    }
    check_tap(baseline_.spec, {unit.layer_index, TapRole::ranking});
    const auto& shape = shapes[unit.layer_index + 1];
    if (mask.selected.size() != shape[0]) {
      throw ShapeError("mask for layer " + std::to_string(mask.layer_index) + " covers " +
                       std::to_string(mask.selected.size()) + " channels, layer has " + std::to_string(shape[0]));
    }
    for (auto c : unit.channels) {
      if (!claimed[unit.layer_index].insert(c).second) {
        throw ConfigError("channel " + std::to_string(c) + " of layer " + std::to_string(unit.layer_index) +
                          " is claimed by two generative units");
      }
    }
    const auto l = unit.layers();
    const std::size_t n = unit.channels.size();
    const auto expect = [&](const LayerParams& p, const LayerSpec& layer, std::size_t in) {
      const auto ps = layer_param_shapes(layer, {in, 3, 3});
      if (p.weight.shape() != ps.weight || p.bias.shape() != ps.bias) {
        throw ShapeError("generative unit " + std::to_string(u) + ": parameter shapes do not match width " +
                         std::to_string(unit.width) + " over " + std::to_string(n) + " channels");
      }
    };
    if (unit.params.size() != 3 || !unit.params[1].weight.empty() || !unit.params[1].bias.empty()) {
      throw ShapeError("generative unit " + std::to_string(u) + ": expected conv, relu, conv parameters");
    }
    expect(unit.params[0], l[0], n);
    expect(unit.params[2], l[2], unit.width);
  }
  const std::size_t budget = parameter_count(baseline_.params);
  if (4 * unit_parameter_count() >= budget) {
    throw ConfigError("generative units hold " + std::to_string(unit_parameter_count()) +
                      " parameters, not below 25% of the baseline's " + std::to_string(budget));
  }
}

std::size_t GenerativeNetwork::unit_parameter_count() const {
  std::size_t total = 0;
  for (const auto& u : units_) total += u.parameter_count();
  return total;
}

NetworkOutput GenerativeNetwork::eval(const Tensor& inputs, std::span<const std::size_t> taps) const {
  const auto& spec = baseline_.spec;
  if (inputs.rank() != 4 || Shape(inputs.shape().begin() + 1, inputs.shape().end()) != spec.input_shape) {
    throw ShapeError("input batch " + shape_string(inputs.shape()) + " does not match network input " +
                     shape_string(spec.input_shape));
  }
  for (auto t : taps) {
    if (t >= spec.layers.size()) throw ShapeError("tap index " + std::to_string(t) + " out of range");
  }
  NetworkOutput out;
  out.taps.resize(taps.size());
  out.logits = Propagator(*this).run(inputs, 0, nullptr, taps, &out.taps);
  return out;
}

Tensor GenerativeNetwork::extract_features(const FeatureTap& tap, const Tensor& inputs) const {
  check_tap(baseline_.spec, tap);
  const std::size_t layer = tap.layer_index;
  return std::move(eval(inputs, std::span(&layer, 1)).taps.front());
}

GenerativeNetwork GenerativeNetwork::with_unit_params(std::vector<ParamSet> params) const {
  if (params.size() != units_.size()) throw ShapeError("unit parameter list length mismatch");
  auto units = units_;
  for (std::size_t u = 0; u < units.size(); ++u) units[u].params = std::move(params[u]);
  return GenerativeNetwork(baseline_, masks_, std::move(units));
}

GenerativeNetwork assemble_gen_net(Checkpoint ckpt, std::vector<SignificanceMask> masks,
                                   std::vector<GenerativeUnit> units) {
  return GenerativeNetwork(std::move(ckpt), std::move(masks), std::move(units));
}

double objective(const GenerativeNetwork& net, const LabeledBatch& batch, const RegularizationSpec& reg) {
  check_reg(reg);
  if (batch.labels.empty()) throw ConfigError("objective needs a non-empty batch");
  return loss_crossentropy(net.logits(batch.inputs), batch.labels) + reg.lambda * regularizer(net.units(), reg.kind);
}

ObjectiveGradient objective_gradient(const GenerativeNetwork& net, const LabeledBatch& batch,
                                     const RegularizationSpec& reg) {
  check_reg(reg);
  if (batch.labels.empty()) throw ConfigError("objective needs a non-empty batch");
  (void)net.eval(batch.inputs.slice(0, 1));  // shape check
  return objective_from(net, batch.inputs, 0, batch.labels, reg);
}

GenerativeNetwork train_units(const GenerativeNetwork& net, const UnitTrainingSet& train_set,
                              const RegularizationSpec& reg, const TrainHyper& hyper) {
  check_reg(reg);
  if (net.units().empty()) throw ConfigError("train_units needs at least one generative unit");
  if (train_set.mixture.empty()) throw ConfigError("unit training mixture is empty");
  if (hyper.batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto& clean = train_set.clean;
  const std::size_t n = clean.labels.size();
  if (n == 0 || clean.inputs.rank() != 4 || clean.inputs.dim(0) != n) {
    throw ShapeError("unit training inputs and labels disagree in length");
  }

  const auto& spec = net.baseline().spec;
  const auto& base_params = net.baseline().params;
  std::size_t first_layer = spec.layers.size();
  for (const auto& u : net.units()) first_layer = std::min(first_layer, u.layer_index);
  const std::span<const LayerSpec> prefix_layers(spec.layers.data(), first_layer + 1);
  const std::span<const LayerParams> prefix_params(base_params.data(), first_layer + 1);

  std::vector<ParamSet> params;
  for (const auto& u : net.units()) params.push_back(u.params);
  std::vector<ParamSet> velocity;
  for (const auto& p : params) velocity.push_back(zeros_like(p));

  const Shape image_shape(clean.inputs.shape().begin() + 1, clean.inputs.shape().end());
  const std::size_t per = shape_size(image_shape);
  const std::size_t m = train_set.mixture.size();
  GenerativeNetwork current = net;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng = SplitMix64::derive(hyper.seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double objective_sum = 0.0;
    for (std::size_t start = 0; start < n; start += hyper.batch_size) {
      const std::size_t count = std::min(hyper.batch_size, n - start);
      Shape batch_shape{count};
      batch_shape.insert(batch_shape.end(), image_shape.begin(), image_shape.end());
      Tensor inputs(batch_shape);
      std::vector<int> labels;
      for (std::size_t j = 0; j < count; ++j) {
        const std::size_t i = order[start + j];
        DegradationChain chain = train_set.mixture[(start + j) % m];
        for (auto& d : chain) {
          if (d.kind == DegradationKind::awgn) {
            d.seed = SplitMix64::derive_seed(d.seed, static_cast<std::uint64_t>(epoch) * n + i);
          }
        }
        Tensor image(image_shape, std::vector<double>(clean.inputs.data() + i * per, clean.inputs.data() + (i + 1) * per));
        for (const auto& d : chain) image = apply_degradation(image, d);
        std::memcpy(inputs.data() + j * per, image.data(), per * sizeof(double));
        labels.push_back(clean.labels[i]);
      }
      Tensor act = forward(prefix_layers, prefix_params, std::move(inputs));
      const auto og = objective_from(current, std::move(act), first_layer + 1, labels, reg);
      if (!std::isfinite(og.value)) {
        throw DivergenceError("generative unit training diverged (non-finite objective) in epoch " +
                                  std::to_string(epoch),
                              epoch);
      }
      objective_sum += og.value * static_cast<double>(count);
      for (std::size_t u = 0; u < params.size(); ++u) {
        sgd_step(params[u], og.unit_gradients[u], hyper.lr, hyper.momentum, velocity[u]);
      }
      current = current.with_unit_params(params);
    }
    if (hyper.on_epoch) hyper.on_epoch(epoch, objective_sum / static_cast<double>(n));
  }
  return current;
}

void encode_units(std::span<const GenerativeUnit> units, ByteWriter& out) {
  out.raw("GSGU");
  out.u16le(static_cast<std::uint16_t>(units.size()));
  for (const auto& u : units) {
    out.u32le(static_cast<std::uint32_t>(u.layer_index));
    out.u32le(static_cast<std::uint32_t>(u.channels.size()));
    for (auto c : u.channels) out.u32le(static_cast<std::uint32_t>(c));
    out.u32le(static_cast<std::uint32_t>(u.width));
    for (const auto& p : u.params) {
      for (double v : p.weight.values()) out.f64le(v);
      for (double v : p.bias.values()) out.f64le(v);
    }
  }
}

std::vector<GenerativeUnit> decode_units(ByteReader& in, const NetworkSpec& spec) {
  const std::string magic = in.raw(4);
  if (magic != "GSGU") throw FormatError("bad unit section magic: expected \"GSGU\", found \"" + magic + "\"");
  const auto shapes = spec.activation_shapes();
  const std::size_t count = in.u16le();
  std::vector<GenerativeUnit> units;
  for (std::size_t u = 0; u < count; ++u) {
    GenerativeUnit unit;
    unit.layer_index = in.u32le();
    if (unit.layer_index >= spec.layers.size() || shapes[unit.layer_index + 1].size() != 3) {
      throw ShapeError("generative unit " + std::to_string(u) + ": layer " + std::to_string(unit.layer_index) +
                       " is not a channel-indexed layer of the checkpoint");
    }
    const std::size_t n = in.u32le();
    if (n == 0) throw FormatError("generative unit " + std::to_string(u) + " selects no channels");
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t c = in.u32le();
      if (c >= shapes[unit.layer_index + 1][0]) {
        throw ShapeError("generative unit " + std::to_string(u) + ": channel " + std::to_string(c) + " out of range");
      }
      unit.channels.push_back(c);
    }
    unit.width = in.u32le();
    if (unit.width == 0) throw FormatError("generative unit " + std::to_string(u) + " has zero width");
    const auto l = unit.layers();
    Shape shape{n, 3, 3};
    for (std::size_t k = 0; k < l.size(); ++k) {
      LayerParams p;
      if (l[k].has_params()) {
        const auto ps = layer_param_shapes(l[k], shape);
        p.weight = Tensor(ps.weight);
        for (auto& v : p.weight.values()) v = in.f64le();
        p.bias = Tensor(ps.bias);
        for (auto& v : p.bias.values()) v = in.f64le();
      }
      shape = layer_output_shape(l[k], shape, k);
      unit.params.push_back(std::move(p));
    }
    units.push_back(std::move(unit));
  }
  return units;
}

std::vector<std::uint8_t> encode_generative(const GenerativeNetwork& net) {
  ByteWriter w;
  encode_checkpoint(net.baseline(), w);
  encode_units(net.units(), w);
  return std::move(w).take();
}

GenerativeNetwork decode_generative(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader in(bytes, context);
  Checkpoint ckpt = decode_checkpoint(in);
  auto units = decode_units(in, ckpt.spec);
  if (!in.at_end()) throw FormatError(context + ": " + std::to_string(in.remaining()) + " unexpected trailing bytes");
  const auto shapes = ckpt.spec.activation_shapes();
  std::vector<SignificanceMask> masks;
  for (const auto& u : units) {
    SignificanceMask mask;
    mask.layer_index = u.layer_index;
    mask.selected.assign(shapes[u.layer_index + 1][0], false);
    for (auto c : u.channels) mask.selected[c] = true;
    mask.rule = MaskRule::top_k(static_cast<std::int64_t>(u.channels.size()));
    masks.push_back(std::move(mask));
  }
  return GenerativeNetwork(std::move(ckpt), std::move(masks), std::move(units));
}

void save_generative(const GenerativeNetwork& net, const std::filesystem::path& path) {
  write_file_atomic(path, encode_generative(net));
}

GenerativeNetwork load_generative(const std::filesystem::path& path) {
  return decode_generative(read_file(path), path.string());
}

}  // namespace gensense
