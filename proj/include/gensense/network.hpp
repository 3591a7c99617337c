#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gensense/tensor.hpp"

namespace gensense {

enum class LayerKind { conv, relu, maxpool, flatten, dense };

std::string_view layer_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t out_channels = 0;  // conv
  std::size_t kernel = 0;        // conv, maxpool
  std::size_t stride = 1;        // conv, maxpool
  std::size_t pad = 0;           // conv
  std::size_t out_dim = 0;       // dense

  // Stride-1 convolution with "same" zero padding.
  static LayerSpec conv(std::size_t out_channels, std::size_t kernel);
  static LayerSpec conv(std::size_t out_channels, std::size_t kernel, std::size_t stride, std::size_t pad);
  static LayerSpec relu();
  static LayerSpec maxpool(std::size_t kernel, std::size_t stride);
  static LayerSpec flatten();
  static LayerSpec dense(std::size_t out_dim);

  bool has_params() const noexcept { return kind == LayerKind::conv || kind == LayerKind::dense; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Weight and bias of one layer. Both are empty for parameter-free layers.
/// conv: weight (out, in, k, k), bias (out). dense: weight (out, in), bias (out).
struct LayerParams {
  Tensor weight;
  Tensor bias;

  std::size_t count() const noexcept { return weight.size() + bias.size(); }
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

using ParamSet = std::vector<LayerParams>;

std::size_t parameter_count(const ParamSet& params);
ParamSet zeros_like(const ParamSet& params);

// Per-sample output shape of `layer` applied to per-sample `input`; throws
// ShapeError mentioning `index` when the layer cannot accept the input.
Shape layer_output_shape(const LayerSpec& layer, const Shape& input, std::size_t index);

struct ParamShapes {
  Shape weight;
  Shape bias;
};
ParamShapes layer_param_shapes(const LayerSpec& layer, const Shape& input);

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  Shape input_shape;  // (channels, height, width)
  std::size_t num_classes = 0;

  // Per-sample activation shapes; element 0 is the input, element i + 1 the
  // output of layer i. Throws ShapeError naming the first layer that does not compose.
  std::vector<Shape> activation_shapes() const;
  void validate() const { (void)activation_shapes(); }
  std::size_t parameter_count() const;

  // Line-oriented text form, parsed back by parse().
  std::string describe() const;
  static NetworkSpec parse(std::string_view text);

  // conv(8,3) relu maxpool(2) conv(16,3) relu maxpool(2) flatten dense(64) relu dense(classes)
  static NetworkSpec reference(Shape input_shape, std::size_t num_classes);

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Glorot-uniform weights, zero biases, drawn from SplitMix64(seed).
ParamSet init_layer_params(std::span<const LayerSpec> layers, const Shape& input_shape, std::uint64_t seed);
ParamSet init_params(const NetworkSpec& spec, std::uint64_t seed);

// Throws ShapeError naming the offending layer.
void check_params(const NetworkSpec& spec, const ParamSet& params);

// Batched single-layer passes; tensors carry a leading batch axis.
Tensor layer_forward(const LayerSpec& layer, const LayerParams& params, const Tensor& input);

// Returns the gradient w.r.t. `input`. When `grads` is non-null the parameter
// gradients are accumulated into it.
Tensor layer_backward(const LayerSpec& layer, const LayerParams& params, const Tensor& input,
                      const Tensor& grad_output, LayerParams* grads);

// acts[0] = input, acts[i + 1] = output of layers[i].
std::vector<Tensor> forward_trace(std::span<const LayerSpec> layers, std::span<const LayerParams> params,
                                  Tensor input);
Tensor forward(std::span<const LayerSpec> layers, std::span<const LayerParams> params, Tensor input);

// Walks a trace produced by forward_trace backwards. Parameter gradients are
// accumulated into `grads` unless it is empty. Returns the gradient w.r.t. acts[0].
Tensor backward_trace(std::span<const LayerSpec> layers, std::span<const LayerParams> params,
                      std::span<const Tensor> acts, Tensor grad_output, std::span<LayerParams> grads);

struct LabeledBatch {
  Tensor inputs;            // (batch, channels, height, width)
  std::vector<int> labels;  // one class index per sample
};

struct NetworkOutput {
  Tensor logits;
  std::vector<Tensor> taps;  // in request order; tap i is the output of layer i
};

NetworkOutput eval_network(const NetworkSpec& spec, const ParamSet& params, const Tensor& inputs,
                           std::span<const std::size_t> taps = {});

// Runs layers (after_layer, end) on an activation taken at the output of after_layer.
Tensor resume_network(const NetworkSpec& spec, const ParamSet& params, Tensor activation,
                      std::size_t after_layer);

Tensor softmax(const Tensor& logits);
double loss_crossentropy(const Tensor& logits, std::span<const int> labels);
// d(mean cross-entropy)/d(logits) = (softmax - onehot) / batch.
Tensor crossentropy_gradient(const Tensor& logits, std::span<const int> labels);

std::vector<int> predict(const Tensor& logits);
double accuracy(const Tensor& logits, std::span<const int> labels);

struct LossGradient {
  double loss = 0.0;
  ParamSet gradients;
};

// Mean cross-entropy of the network on `batch` and its gradient w.r.t. every parameter.
LossGradient backward(const NetworkSpec& spec, const ParamSet& params, const LabeledBatch& batch);

// v <- momentum * v - lr * g; p <- p + v
void sgd_step(ParamSet& params, const ParamSet& grads, double lr, double momentum, ParamSet& velocity);

}  // namespace gensense
