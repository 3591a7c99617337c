#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gensense/baseline.hpp"
#include "gensense/config.hpp"
#include "gensense/bytes.hpp"
#include "gensense/network.hpp"
#include "gensense/prng.hpp"
#include "gensense/tensor.hpp"

namespace testsupport {

using namespace gensense;

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  SplitMix64 rng(seed);
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so relu kinks sit farther than eps from every input.
inline Tensor random_off_zero(const Shape& shape, std::uint64_t seed) {
  Tensor t = random_tensor(shape, seed);
  for (auto& v : t.values()) v = v < 0 ? v - 0.05 : v + 0.05;
  return t;
}

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero entries from
// turning rounding noise into a huge ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

// Centered differences of f around x, compared entry-wise with `analytic`.
inline double max_fd_error(Tensor& x, const Tensor& analytic, const std::function<double()>& f,
                           double eps = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f();
    x[i] = keep - eps;
    const double down = f();
    x[i] = keep;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * eps)));
  }
  return worst;
}

inline double weighted_sum(const Tensor& t, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

// Worst relative error of layer_backward against finite differences of
// L = sum(R * layer_forward(x)), over the input and both parameter tensors.
inline double layer_fd_error(const LayerSpec& layer, const Shape& sample, std::size_t batch, std::uint64_t seed) {
  Shape in_shape{batch};
  in_shape.insert(in_shape.end(), sample.begin(), sample.end());
  Tensor x = layer.kind == LayerKind::relu ? random_off_zero(in_shape, seed) : random_tensor(in_shape, seed);
  const LayerSpec one[] = {layer};
  ParamSet params = init_layer_params(one, sample, seed + 1);
  auto& p = params[0];
  for (auto& v : p.bias.values()) v = 0.1;  // nonzero biases exercise their gradient path
  const Tensor y = layer_forward(layer, p, x);
  const Tensor r = random_tensor(y.shape(), seed + 2);
  LayerParams grads{Tensor(), Tensor()};
  if (layer.has_params()) grads = LayerParams{Tensor(p.weight.shape()), Tensor(p.bias.shape())};
  const Tensor gx = layer_backward(layer, p, x, r, layer.has_params() ? &grads : nullptr);
  const auto loss = [&] { return weighted_sum(layer_forward(layer, p, x), r); };
  double worst = max_fd_error(x, gx, loss);
  if (layer.has_params()) {
    worst = std::max(worst, max_fd_error(p.weight, grads.weight, loss));
    worst = std::max(worst, max_fd_error(p.bias, grads.bias, loss));
  }
  return worst;
}

// conv(2, k=1) on a 1x1x1 input, flatten, dense(2). Channel 0 copies the
// pixel, channel 1 is the constant 1. Logits: class 0 = 0.5 * ch1, class 1 = ch0.
// Pixel 1 -> class 1, pixel 0 -> class 0.
inline Checkpoint oracle_checkpoint() {
  Checkpoint ckpt;
  ckpt.spec.input_shape = {1, 1, 1};
  ckpt.spec.num_classes = 2;
  ckpt.spec.layers = {LayerSpec::conv(2, 1), LayerSpec::flatten(), LayerSpec::dense(2)};
  ckpt.params = {LayerParams{Tensor({2, 1, 1, 1}, {1.0, 0.0}), Tensor({2}, {0.0, 1.0})}, LayerParams{},
                 LayerParams{Tensor({2, 2}, {0.0, 0.5, 1.0, 0.0}), Tensor({2}, {0.0, 0.0})}};
  return ckpt;
}

// The full enumeration of the oracle's input space: one sample per class.
inline LabeledBatch oracle_eval_set() { return {Tensor({2, 1, 1, 1}, {0.0, 1.0}), {0, 1}}; }

// Brute-force prediction of the oracle net from its two channel values.
inline int oracle_predict(double ch0, double ch1) { return ch0 > 0.5 * ch1 ? 1 : 0; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gensense-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// A run small enough for a unit test: 16x16 images, a few epochs per stage.
inline RunConfig tiny_run_config(const std::filesystem::path& out) {
  return RunConfig::parse(
      "out = " + out.string() +
      "\nseed = 3\nimage-size = 16\ntrain-size = 48\nrank-eval-size = 16\nhead-train-size = 16\ntest-size = 16\n"
      "sigma-levels = 0,1\nmodality = invert\ntop-k = 2\nunit-width = 4\nbatch-size = 8\n"
      "baseline-epochs = 2\nunit-epochs = 2\nhead-epochs = 20\n");
}

// Every regular file under dir, keyed by relative path.
inline std::map<std::string, std::vector<std::uint8_t>> directory_bytes(const std::filesystem::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).generic_string()] = read_file(e.path());
  }
  return out;
}

}  // namespace testsupport
