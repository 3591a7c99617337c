#include "gensense/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#include "gensense/error.hpp"
#include "gensense/prng.hpp"

namespace gensense {

namespace {

std::string layer_label(const LayerSpec& layer, std::size_t index) {
  return "layer " + std::to_string(index) + " (" + std::string(layer_name(layer.kind)) + ")";
}

Shape with_batch(std::size_t batch, const Shape& sample) {
  Shape out{batch};
  out.insert(out.end(), sample.begin(), sample.end());
  return out;
}

Shape sample_shape(const Tensor& t) { return Shape(t.shape().begin() + 1, t.shape().end()); }

// Output positions whose input coordinate o*stride + k - pad falls inside [0, extent).
struct Span1d {
  std::size_t lo = 0;
  std::size_t hi = 0;  // exclusive
};

Span1d valid_outputs(std::size_t out_extent, std::size_t in_extent, std::size_t k, std::size_t stride,
                     std::size_t pad) {
  Span1d r;
  // smallest o with o*stride + k >= pad
  r.lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  // largest o with o*stride + k - pad <= in_extent - 1
  const std::size_t top = in_extent - 1 + pad;
  if (top < k) return {0, 0};
  r.hi = std::min(out_extent, (top - k) / stride + 1);
  if (r.lo > r.hi) r.lo = r.hi;
  return r;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

struct ConvGeometry {
  std::size_t cin, h, w, k, s, pad, oh, ow;
  std::size_t rows() const { return cin * k * k; }
  std::size_t cols() const { return oh * ow; }
};

// im2col for one sample: row (ic, kh, kw), column (y, x); padding stays zero.
void gather_columns(const ConvGeometry& g, const double* src, RowMatrix& cols) {
  cols.setZero(g.rows(), g.cols());
  for (std::size_t ic = 0; ic < g.cin; ++ic) {
    const double* plane = src + ic * g.h * g.w;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      const Span1d ys = valid_outputs(g.oh, g.h, kh, g.s, g.pad);
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const Span1d xs = valid_outputs(g.ow, g.w, kw, g.s, g.pad);
        double* row = cols.data() + ((ic * g.k + kh) * g.k + kw) * g.cols();
        for (std::size_t y = ys.lo; y < ys.hi; ++y) {
          const double* srow = plane + (y * g.s + kh - g.pad) * g.w;
          double* drow = row + y * g.ow;
          for (std::size_t x = xs.lo; x < xs.hi; ++x) drow[x] = srow[x * g.s + kw - g.pad];
        }
      }
    }
  }
}

void scatter_columns(const ConvGeometry& g, const RowMatrix& cols, double* dst) {
  for (std::size_t ic = 0; ic < g.cin; ++ic) {
    double* plane = dst + ic * g.h * g.w;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      const Span1d ys = valid_outputs(g.oh, g.h, kh, g.s, g.pad);
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const Span1d xs = valid_outputs(g.ow, g.w, kw, g.s, g.pad);
        const double* row = cols.data() + ((ic * g.k + kh) * g.k + kw) * g.cols();
        for (std::size_t y = ys.lo; y < ys.hi; ++y) {
          double* drow = plane + (y * g.s + kh - g.pad) * g.w;
          const double* srow = row + y * g.ow;
          for (std::size_t x = xs.lo; x < xs.hi; ++x) drow[x * g.s + kw - g.pad] += srow[x];
        }
      }
    }
  }
}

ConvGeometry conv_geometry(const LayerSpec& layer, const Tensor& in) {
  ConvGeometry g{in.dim(1), in.dim(2), in.dim(3), layer.kernel, layer.stride, layer.pad, 0, 0};
  g.oh = (g.h + 2 * g.pad - g.k) / g.s + 1;
  g.ow = (g.w + 2 * g.pad - g.k) / g.s + 1;
  return g;
}

Tensor conv_forward(const LayerSpec& layer, const LayerParams& p, const Tensor& in) {
  const ConvGeometry g = conv_geometry(layer, in);
  const std::size_t batch = in.dim(0), cout = layer.out_channels;
  Tensor out({batch, cout, g.oh, g.ow});
  const ConstMap weight(p.weight.data(), cout, g.rows());
  RowMatrix cols;
  for (std::size_t n = 0; n < batch; ++n) {
    gather_columns(g, in.plane(n, 0), cols);
    MutMap dst(out.plane(n, 0), cout, g.cols());
    dst.noalias() = weight * cols;
    for (std::size_t oc = 0; oc < cout; ++oc) dst.row(oc).array() += p.bias[oc];
  }
  return out;
}

Tensor conv_backward(const LayerSpec& layer, const LayerParams& p, const Tensor& in, const Tensor& gout,
                     LayerParams* grads) {
  const ConvGeometry g = conv_geometry(layer, in);
  const std::size_t batch = in.dim(0), cout = layer.out_channels;
  Tensor gin(in.shape());
  const ConstMap weight(p.weight.data(), cout, g.rows());
  RowMatrix cols, gcols;
  for (std::size_t n = 0; n < batch; ++n) {
    const ConstMap go(gout.plane(n, 0), cout, g.cols());
    if (grads != nullptr) {
      gather_columns(g, in.plane(n, 0), cols);
      MutMap gw(grads->weight.data(), cout, g.rows());
      gw.noalias() += go * cols.transpose();
      // plain loop: Eigen's vectorized sum peels by address, so its order is not reproducible
      for (std::size_t oc = 0; oc < cout; ++oc) {
        const double* row = gout.plane(n, oc);
        double s = 0.0;
        for (std::size_t i = 0; i < g.cols(); ++i) s += row[i];
        grads->bias[oc] += s;
      }
    }
    gcols.noalias() = weight.transpose() * go;
    scatter_columns(g, gcols, gin.plane(n, 0));
  }
  return gin;
}

Tensor relu_forward(const Tensor& in) {
  Tensor out = in;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& in, const Tensor& gout) {
  Tensor gin = gout;
  for (std::size_t i = 0; i < gin.size(); ++i) {
    if (!(in[i] > 0.0)) gin[i] = 0.0;
  }
  return gin;
}

Tensor maxpool_forward(const LayerSpec& layer, const Tensor& in) {
  const std::size_t batch = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t k = layer.kernel, s = layer.stride;
  const std::size_t oh = (h - k) / s + 1, ow = (w - k) / s + 1;
  Tensor out({batch, c, oh, ow});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double best = in.at(n, ch, y * s, x * s);
          for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx) best = std::max(best, in.at(n, ch, y * s + dy, x * s + dx));
          }
          out.at(n, ch, y, x) = best;
        }
      }
    }
  }
  return out;
}

// Gradient goes to the first maximal element of each window in scan order.
Tensor maxpool_backward(const LayerSpec& layer, const Tensor& in, const Tensor& gout) {
  const std::size_t batch = in.dim(0), c = in.dim(1);
  const std::size_t k = layer.kernel, s = layer.stride;
  const std::size_t oh = gout.dim(2), ow = gout.dim(3);
  Tensor gin(in.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          std::size_t by = y * s, bx = x * s;
          double best = in.at(n, ch, by, bx);
          for (std::size_t dy = 0; dy < k; ++dy) {
            for (std::size_t dx = 0; dx < k; ++dx) {
              const double v = in.at(n, ch, y * s + dy, x * s + dx);
              if (v > best) {
                best = v;
                by = y * s + dy;
                bx = x * s + dx;
              }
            }
          }
          gin.at(n, ch, by, bx) += gout.at(n, ch, y, x);
        }
      }
    }
  }
  return gin;
}

Tensor dense_forward(const LayerSpec& layer, const LayerParams& p, const Tensor& in) {
  const std::size_t batch = in.dim(0), din = in.dim(1), dout = layer.out_dim;
  Tensor out({batch, dout});
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = in.data() + n * din;
    for (std::size_t o = 0; o < dout; ++o) {
      const double* wrow = p.weight.data() + o * din;
      double acc = p.bias[o];
      for (std::size_t i = 0; i < din; ++i) acc += wrow[i] * x[i];
      out[n * dout + o] = acc;
    }
  }
  return out;
}

Tensor dense_backward(const LayerSpec& layer, const LayerParams& p, const Tensor& in, const Tensor& gout,
                      LayerParams* grads) {
  const std::size_t batch = in.dim(0), din = in.dim(1), dout = layer.out_dim;
  Tensor gin(in.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = in.data() + n * din;
    double* gx = gin.data() + n * din;
    for (std::size_t o = 0; o < dout; ++o) {
      const double g = gout[n * dout + o];
      const double* wrow = p.weight.data() + o * din;
      for (std::size_t i = 0; i < din; ++i) gx[i] += wrow[i] * g;
      if (grads != nullptr) {
        grads->bias[o] += g;
        double* gw = grads->weight.data() + o * din;
        for (std::size_t i = 0; i < din; ++i) gw[i] += g * x[i];
      }
    }
  }
  return gin;
}

}  // namespace

std::string_view layer_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv(std::size_t out_channels, std::size_t kernel) {
  return conv(out_channels, kernel, 1, (kernel - 1) / 2);
}

LayerSpec LayerSpec::conv(std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t pad) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.out_channels = out_channels;
  l.kernel = kernel;
  l.stride = stride;
  l.pad = pad;
  return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::maxpool(std::size_t kernel, std::size_t stride) {
  LayerSpec l;
  l.kind = LayerKind::maxpool;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  return l;
}

LayerSpec LayerSpec::dense(std::size_t out_dim) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.out_dim = out_dim;
  return l;
}

std::size_t parameter_count(const ParamSet& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.count();
  return total;
}

ParamSet zeros_like(const ParamSet& params) {
  ParamSet out;
  out.reserve(params.size());
  for (const auto& p : params) {
    LayerParams z;
    if (!p.weight.empty()) z.weight = Tensor(p.weight.shape());
    if (!p.bias.empty()) z.bias = Tensor(p.bias.shape());
    out.push_back(std::move(z));
  }
  return out;
}

Shape layer_output_shape(const LayerSpec& layer, const Shape& input, std::size_t index) {
  const auto fail = [&](const std::string& why) -> Shape {
    throw ShapeError(layer_label(layer, index) + ": " + why + " (input " + shape_string(input) + ")");
  };
  switch (layer.kind) {
    case LayerKind::conv: {
      if (input.size() != 3) return fail("expects a (channels, height, width) input");
      if (layer.out_channels == 0 || layer.kernel == 0 || layer.stride == 0) return fail("zero extent");
      const std::size_t h = input[1] + 2 * layer.pad, w = input[2] + 2 * layer.pad;
      if (h < layer.kernel || w < layer.kernel) return fail("kernel larger than padded input");
      if (layer.pad >= layer.kernel) return fail("padding must be smaller than the kernel");
      return {layer.out_channels, (h - layer.kernel) / layer.stride + 1, (w - layer.kernel) / layer.stride + 1};
    }
    case LayerKind::relu:
      return input;
    case LayerKind::maxpool: {
      if (input.size() != 3) return fail("expects a (channels, height, width) input");
      if (layer.kernel == 0 || layer.stride == 0) return fail("zero extent");
      if (input[1] < layer.kernel || input[2] < layer.kernel) return fail("window larger than input");
      return {input[0], (input[1] - layer.kernel) / layer.stride + 1, (input[2] - layer.kernel) / layer.stride + 1};
    }
    case LayerKind::flatten:
      return {shape_size(input)};
    case LayerKind::dense:
      if (input.size() != 1) return fail("expects a flat vector input; insert flatten first");
      if (layer.out_dim == 0) return fail("zero output width");
      return {layer.out_dim};
  }
  return fail("unknown layer kind");
}

ParamShapes layer_param_shapes(const LayerSpec& layer, const Shape& input) {
  switch (layer.kind) {
    case LayerKind::conv:
      return {{layer.out_channels, input.at(0), layer.kernel, layer.kernel}, {layer.out_channels}};
    case LayerKind::dense:
      return {{layer.out_dim, input.at(0)}, {layer.out_dim}};
    default:
      return {};
  }
}

std::vector<Shape> NetworkSpec::activation_shapes() const {
  if (input_shape.size() != 3 || shape_size(input_shape) == 0) {
    throw ShapeError("network input shape must be (channels, height, width), got " + shape_string(input_shape));
  }
  if (layers.empty()) throw ShapeError("network has no layers");
  std::vector<Shape> shapes{input_shape};
  for (std::size_t i = 0; i < layers.size(); ++i) shapes.push_back(layer_output_shape(layers[i], shapes.back(), i));
  if (shapes.back() != Shape{num_classes}) {
    throw ShapeError(layer_label(layers.back(), layers.size() - 1) + ": final output " +
                     shape_string(shapes.back()) + " is not a logit vector of " + std::to_string(num_classes) +
                     " classes");
  }
  return shapes;
}

std::size_t NetworkSpec::parameter_count() const {
  const auto shapes = activation_shapes();
  std::size_t total = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto ps = layer_param_shapes(layers[i], shapes[i]);
    if (layers[i].has_params()) total += shape_size(ps.weight) + shape_size(ps.bias);
  }
  return total;
}

std::string NetworkSpec::describe() const {
  std::ostringstream os;
  os << "input " << input_shape.at(0) << ' ' << input_shape.at(1) << ' ' << input_shape.at(2) << '\n';
  os << "classes " << num_classes << '\n';
  for (const auto& l : layers) {
    os << layer_name(l.kind);
    switch (l.kind) {
      case LayerKind::conv: os << ' ' << l.out_channels << ' ' << l.kernel << ' ' << l.stride << ' ' << l.pad; break;
      case LayerKind::maxpool: os << ' ' << l.kernel << ' ' << l.stride; break;
      case LayerKind::dense: os << ' ' << l.out_dim; break;
      default: break;
    }
    os << '\n';
  }
  return os.str();
}

NetworkSpec NetworkSpec::parse(std::string_view text) {
  NetworkSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    const auto bad = [&]() {
      return FormatError("network description line " + std::to_string(lineno) + ": cannot parse '" + line + "'");
    };
    std::size_t a = 0, b = 0, c = 0, d = 0;
    if (word == "input") {
      if (!(ls >> a >> b >> c)) throw bad();
      spec.input_shape = {a, b, c};
    } else if (word == "classes") {
      if (!(ls >> a)) throw bad();
      spec.num_classes = a;
    } else if (word == "conv") {
      if (!(ls >> a >> b >> c >> d)) throw bad();
      spec.layers.push_back(LayerSpec::conv(a, b, c, d));
    } else if (word == "relu") {
      spec.layers.push_back(LayerSpec::relu());
    } else if (word == "maxpool") {
      if (!(ls >> a >> b)) throw bad();
      spec.layers.push_back(LayerSpec::maxpool(a, b));
    } else if (word == "flatten") {
      spec.layers.push_back(LayerSpec::flatten());
    } else if (word == "dense") {
      if (!(ls >> a)) throw bad();
      spec.layers.push_back(LayerSpec::dense(a));
    } else {
      throw bad();
    }
  }
  spec.validate();
  return spec;
}

NetworkSpec NetworkSpec::reference(Shape input_shape, std::size_t num_classes) {
  NetworkSpec spec;
  spec.input_shape = std::move(input_shape);
  spec.num_classes = num_classes;
  spec.layers = {LayerSpec::conv(8, 3),   LayerSpec::relu(),    LayerSpec::maxpool(2, 2),
                 LayerSpec::conv(16, 3),  LayerSpec::relu(),    LayerSpec::maxpool(2, 2),
                 LayerSpec::flatten(),    LayerSpec::dense(64), LayerSpec::relu(),
                 LayerSpec::dense(num_classes)};
  spec.validate();
  return spec;
}

ParamSet init_layer_params(std::span<const LayerSpec> layers, const Shape& input_shape, std::uint64_t seed) {
  SplitMix64 rng(seed);
  ParamSet params;
  Shape shape = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    LayerParams p;
    if (layer.has_params()) {
      const auto ps = layer_param_shapes(layer, shape);
      std::size_t fan_in = 0, fan_out = 0;
      if (layer.kind == LayerKind::conv) {
        fan_in = ps.weight[1] * layer.kernel * layer.kernel;
        fan_out = ps.weight[0] * layer.kernel * layer.kernel;
      } else {
        fan_in = ps.weight[1];
        fan_out = ps.weight[0];
      }
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      p.weight = Tensor(ps.weight);
      for (auto& v : p.weight.values()) v = rng.uniform(-limit, limit);
      p.bias = Tensor(ps.bias);
    }
    params.push_back(std::move(p));
    shape = layer_output_shape(layer, shape, i);
  }
  return params;
}

ParamSet init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  return init_layer_params(spec.layers, spec.input_shape, seed);
}

void check_params(const NetworkSpec& spec, const ParamSet& params) {
  const auto shapes = spec.activation_shapes();
  if (params.size() != spec.layers.size()) {
    throw ShapeError("parameter set has " + std::to_string(params.size()) + " layers, network has " +
                     std::to_string(spec.layers.size()));
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    const auto& p = params[i];
    if (!layer.has_params()) {
      if (!p.weight.empty() || !p.bias.empty()) {
        throw ShapeError(layer_label(layer, i) + ": parameter-free layer carries parameters");
      }
      continue;
    }
    const auto ps = layer_param_shapes(layer, shapes[i]);
    if (p.weight.shape() != ps.weight || p.bias.shape() != ps.bias) {
      throw ShapeError(layer_label(layer, i) + ": parameters " + shape_string(p.weight.shape()) + "/" +
                       shape_string(p.bias.shape()) + " do not match expected " + shape_string(ps.weight) + "/" +
                       shape_string(ps.bias));
    }
  }
}

Tensor layer_forward(const LayerSpec& layer, const LayerParams& params, const Tensor& input) {
  switch (layer.kind) {
    case LayerKind::conv: return conv_forward(layer, params, input);
    case LayerKind::relu: return relu_forward(input);
    case LayerKind::maxpool: return maxpool_forward(layer, input);
    case LayerKind::flatten: return input.reshaped({input.dim(0), input.size() / input.dim(0)});
    case LayerKind::dense: return dense_forward(layer, params, input);
  }
  throw Error("unknown layer kind");
}

Tensor layer_backward(const LayerSpec& layer, const LayerParams& params, const Tensor& input,
                      const Tensor& grad_output, LayerParams* grads) {
  switch (layer.kind) {
    case LayerKind::conv: return conv_backward(layer, params, input, grad_output, grads);
    case LayerKind::relu: return relu_backward(input, grad_output);
    case LayerKind::maxpool: return maxpool_backward(layer, input, grad_output);
    case LayerKind::flatten: return grad_output.reshaped(input.shape());
    case LayerKind::dense: return dense_backward(layer, params, input, grad_output, grads);
  }
  throw Error("unknown layer kind");
}

std::vector<Tensor> forward_trace(std::span<const LayerSpec> layers, std::span<const LayerParams> params,
                                  Tensor input) {
  std::vector<Tensor> acts;
  acts.reserve(layers.size() + 1);
  acts.push_back(std::move(input));
  for (std::size_t i = 0; i < layers.size(); ++i) acts.push_back(layer_forward(layers[i], params[i], acts.back()));
  return acts;
}

Tensor forward(std::span<const LayerSpec> layers, std::span<const LayerParams> params, Tensor input) {
  for (std::size_t i = 0; i < layers.size(); ++i) input = layer_forward(layers[i], params[i], input);
  return input;
}

Tensor backward_trace(std::span<const LayerSpec> layers, std::span<const LayerParams> params,
                      std::span<const Tensor> acts, Tensor grad_output, std::span<LayerParams> grads) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    LayerParams* g = grads.empty() || !layers[i].has_params() ? nullptr : &grads[i];
    grad_output = layer_backward(layers[i], params[i], acts[i], grad_output, g);
  }
  return grad_output;
}

NetworkOutput eval_network(const NetworkSpec& spec, const ParamSet& params, const Tensor& inputs,
                           std::span<const std::size_t> taps) {
  check_params(spec, params);
  if (inputs.rank() != 4 || sample_shape(inputs) != spec.input_shape) {
    throw ShapeError("input batch " + shape_string(inputs.shape()) + " does not match network input " +
                     shape_string(with_batch(inputs.rank() > 0 ? inputs.dim(0) : 0, spec.input_shape)));
  }
  for (auto t : taps) {
    if (t >= spec.layers.size()) {
      throw ShapeError("tap index " + std::to_string(t) + " out of range for " + std::to_string(spec.layers.size()) +
                       " layers");
    }
  }
  NetworkOutput out;
  out.taps.resize(taps.size());
  Tensor act = inputs;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    act = layer_forward(spec.layers[i], params[i], act);
    for (std::size_t t = 0; t < taps.size(); ++t) {
      if (taps[t] == i) out.taps[t] = act;
    }
  }
  out.logits = std::move(act);
  return out;
}

Tensor resume_network(const NetworkSpec& spec, const ParamSet& params, Tensor activation, std::size_t after_layer) {
  if (after_layer >= spec.layers.size()) throw ShapeError("resume point out of range");
  const std::span<const LayerSpec> layers(spec.layers);
  const std::span<const LayerParams> ps(params);
  return forward(layers.subspan(after_layer + 1), ps.subspan(after_layer + 1), std::move(activation));
}

Tensor softmax(const Tensor& logits) {
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  Tensor out(logits.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = logits.data() + n * classes;
    double* y = out.data() + n * classes;
    const double m = *std::max_element(x, x + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += (y[c] = std::exp(x[c] - m));
    for (std::size_t c = 0; c < classes; ++c) y[c] /= sum;
  }
  return out;
}

namespace {

void check_labels(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw ShapeError("logits must be (batch, classes), got " + shape_string(logits.shape()));
  if (labels.size() != logits.dim(0)) {
    throw ShapeError(std::to_string(labels.size()) + " labels for a batch of " + std::to_string(logits.dim(0)));
  }
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.dim(1)) {
      throw Error("label " + std::to_string(y) + " outside [0, " + std::to_string(logits.dim(1)) + ")");
    }
  }
}

}  // namespace

double loss_crossentropy(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  double total = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = logits.data() + n * classes;
    const std::size_t top = static_cast<std::size_t>(std::max_element(x, x + classes) - x);
    double rest = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (c != top) rest += std::exp(x[c] - x[top]);
    }
    // log-sum-exp = x[top] + log1p(rest) keeps tiny losses accurate
    total += (x[top] - x[labels[n]]) + std::log1p(rest);
  }
  return total / static_cast<double>(batch);
}

Tensor crossentropy_gradient(const Tensor& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  Tensor g = softmax(logits);
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  for (std::size_t n = 0; n < batch; ++n) g[n * classes + static_cast<std::size_t>(labels[n])] -= 1.0;
  for (auto& v : g.values()) v /= static_cast<double>(batch);
  return g;
}

std::vector<int> predict(const Tensor& logits) {
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<int> out(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = logits.data() + n * classes;
    out[n] = static_cast<int>(std::max_element(x, x + classes) - x);
  }
  return out;
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  const auto pred = predict(logits);
  if (pred.size() != labels.size()) throw ShapeError("prediction/label count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

LossGradient backward(const NetworkSpec& spec, const ParamSet& params, const LabeledBatch& batch) {
  check_params(spec, params);
  if (batch.inputs.rank() != 4 || sample_shape(batch.inputs) != spec.input_shape) {
    throw ShapeError("input batch " + shape_string(batch.inputs.shape()) + " does not match network input " +
                     shape_string(spec.input_shape));
  }
  const auto acts = forward_trace(spec.layers, params, batch.inputs);
  LossGradient out;
  out.loss = loss_crossentropy(acts.back(), batch.labels);
  out.gradients = zeros_like(params);
  backward_trace(spec.layers, params, acts, crossentropy_gradient(acts.back(), batch.labels), out.gradients);
  return out;
}

void sgd_step(ParamSet& params, const ParamSet& grads, double lr, double momentum, ParamSet& velocity) {
  if (velocity.empty()) velocity = zeros_like(params);
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity sets differ in length");
  }
  const auto update = [&](Tensor& p, const Tensor& g, Tensor& v, std::size_t layer) {
    if (p.shape() != g.shape() || p.shape() != v.shape()) {
      throw ShapeError("sgd_step: shape mismatch at layer " + std::to_string(layer));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] - lr * g[i];
      p[i] += v[i];
    }
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i].weight, grads[i].weight, velocity[i].weight, i);
    update(params[i].bias, grads[i].bias, velocity[i].bias, i);
  }
}

}  // namespace gensense
