#include <gtest/gtest.h>

#include <cmath>

#include "gensense/error.hpp"
#include "gensense/network.hpp"
#include "support.hpp"

using namespace gensense;
using testsupport::layer_fd_error;
using testsupport::random_tensor;

TEST(Tensor, RejectsZeroExtentAndSizeMismatch) {
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, SliceStackGather) {
  Tensor t({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.slice(1, 2), Tensor({2, 2}, std::vector<double>{3, 4, 5, 6}));
  EXPECT_THROW(t.slice(2, 2), ShapeError);
  const std::size_t idx[] = {2, 0};
  EXPECT_EQ(gather_rows(t, idx), Tensor({2, 2}, std::vector<double>{5, 6, 1, 2}));
  const Tensor parts[] = {Tensor({2}, std::vector<double>{1, 2}), Tensor({2}, std::vector<double>{3, 4})};
  EXPECT_EQ(stack(parts), Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}));
}

TEST(Network, OneByOneConvGivesAffineLogit) {
  NetworkSpec spec{{LayerSpec::conv(1, 1), LayerSpec::flatten()}, {1, 1, 1}, 1};
  ParamSet params{{Tensor({1, 1, 1, 1}, 2.0), Tensor({1}, 1.0)}, {}};
  const auto out = eval_network(spec, params, Tensor({1, 1, 1, 1}, 3.0));
  EXPECT_EQ(out.logits[0], 7.0);
}

TEST(Network, ReluAndMaxpoolExamples) {
  const Tensor r = layer_forward(LayerSpec::relu(), {}, Tensor({1, 2}, std::vector<double>{-1, 2}));
  EXPECT_EQ(r, Tensor({1, 2}, std::vector<double>{0, 2}));
  const Tensor m = layer_forward(LayerSpec::maxpool(2, 2), {}, Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(m.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(m[0], 4.0);
}

TEST(Network, ShapeErrorsNameTheLayer) {
  NetworkSpec spec{{LayerSpec::conv(4, 3), LayerSpec::dense(2)}, {1, 8, 8}, 2};
  try {
    spec.validate();
    FAIL() << "dense on a 3-D activation accepted";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
  }
  const auto ref = NetworkSpec::reference({1, 32, 32}, 4);
  auto params = init_params(ref, 3);
  params[3].weight = Tensor({16, 8, 5, 5});
  try {
    check_params(ref, params);
    FAIL() << "wrong conv weight shape accepted";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(eval_network(ref, init_params(ref, 3), Tensor({1, 1, 16, 16})), ShapeError);
}

TEST(Network, ReferenceArchitecture) {
  const auto spec = NetworkSpec::reference({1, 32, 32}, 4);
  const auto shapes = spec.activation_shapes();
  EXPECT_EQ(shapes[4], (Shape{16, 16, 16}));
  EXPECT_EQ(shapes.back(), (Shape{4}));
  EXPECT_EQ(spec.parameter_count(), 67108u);
  EXPECT_EQ(NetworkSpec::parse(spec.describe()), spec);
}

TEST(Network, GlorotInitBoundsAndDeterminism) {
  const auto spec = NetworkSpec::reference({1, 32, 32}, 4);
  const auto a = init_params(spec, 11), b = init_params(spec, 11), c = init_params(spec, 12);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  const double limit = std::sqrt(6.0 / (1 * 9 + 8 * 9));
  for (double v : a[0].weight.values()) EXPECT_LE(std::abs(v), limit);
  for (double v : a[0].bias.values()) EXPECT_EQ(v, 0.0);
}

TEST(CrossEntropy, UniformAndSaturatedLogits) {
  EXPECT_NEAR(loss_crossentropy(Tensor({1, 10}), std::vector<int>{3}), std::log(10.0), 1e-12);
  EXPECT_NEAR(loss_crossentropy(Tensor({1, 2}), std::vector<int>{0}), 0.693147, 1e-6);
  // -log(1 / (1 + e^-20)) = log1p(e^-20)
  const double expect = std::log1p(std::exp(-20.0));
  const double got = loss_crossentropy(Tensor({1, 2}, std::vector<double>{10, -10}), std::vector<int>{0});
  EXPECT_NEAR(got / expect, 1.0, 1e-9);
  EXPECT_NEAR(got, 2.06e-9, 0.01e-9);
  EXPECT_THROW(loss_crossentropy(Tensor({1, 2}), std::vector<int>{2}), Error);
}

TEST(CrossEntropy, GradientAtUniformSoftmax) {
  const Tensor g = crossentropy_gradient(Tensor({1, 2}), std::vector<int>{0});
  EXPECT_EQ(g, Tensor({1, 2}, std::vector<double>{-0.5, 0.5}));
}

TEST(CrossEntropy, SoftmaxRowsSumToOne) {
  const Tensor p = softmax(random_tensor({6, 5}, 4, -30, 30));
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < 5; ++k) s += p[i * 5 + k];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Dense, WeightGradientEqualsInput) {
  // y = W x with loss = y: dW = x
  const Tensor x({1, 3}, std::vector<double>{0.5, -2, 3});
  LayerParams p{Tensor({1, 3}, 0.3), Tensor({1})};
  LayerParams g{Tensor({1, 3}), Tensor({1})};
  layer_backward(LayerSpec::dense(1), p, x, Tensor({1, 1}, 1.0), &g);
  EXPECT_EQ(g.weight, Tensor({1, 3}, std::vector<double>{0.5, -2, 3}));
  EXPECT_EQ(g.bias[0], 1.0);
}

TEST(GradientCheck, EveryLayerKind) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    EXPECT_LE(layer_fd_error(LayerSpec::conv(3, 3), {2, 5, 5}, 2, seed), 1e-5);
    EXPECT_LE(layer_fd_error(LayerSpec::conv(2, 3, 2, 0), {2, 7, 7}, 2, seed), 1e-5);
    EXPECT_LE(layer_fd_error(LayerSpec::relu(), {2, 3, 3}, 2, seed), 1e-5);
    EXPECT_LE(layer_fd_error(LayerSpec::maxpool(2, 2), {2, 4, 4}, 2, seed), 1e-5);
    EXPECT_LE(layer_fd_error(LayerSpec::flatten(), {2, 3, 3}, 2, seed), 1e-5);
    EXPECT_LE(layer_fd_error(LayerSpec::dense(4), {6}, 3, seed), 1e-5);
  }
}

TEST(GradientCheck, WholeNetworkLoss) {
  NetworkSpec spec{{LayerSpec::conv(3, 3), LayerSpec::relu(), LayerSpec::maxpool(2, 2), LayerSpec::flatten(),
                    LayerSpec::dense(5), LayerSpec::relu(), LayerSpec::dense(3)},
                   {1, 6, 6},
                   3};
  ParamSet params = init_params(spec, 21);
  for (auto& p : params) {
    for (auto& v : p.bias.values()) v = 0.05;
  }
  const LabeledBatch batch{random_tensor({4, 1, 6, 6}, 22, 0, 1), {0, 2, 1, 2}};
  const auto lg = backward(spec, params, batch);
  EXPECT_EQ(lg.loss, loss_crossentropy(eval_network(spec, params, batch.inputs).logits, batch.labels));
  double worst = 0.0;
  for (std::size_t l = 0; l < params.size(); ++l) {
    if (!spec.layers[l].has_params()) continue;
    const auto loss = [&] { return loss_crossentropy(eval_network(spec, params, batch.inputs).logits, batch.labels); };
    worst = std::max(worst, testsupport::max_fd_error(params[l].weight, lg.gradients[l].weight, loss));
    worst = std::max(worst, testsupport::max_fd_error(params[l].bias, lg.gradients[l].bias, loss));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Network, TapAndResumeReproducesLogits) {
  const auto spec = NetworkSpec::reference({1, 16, 16}, 3);
  const auto params = init_params(spec, 5);
  const Tensor x = random_tensor({3, 1, 16, 16}, 6, 0, 1);
  const std::size_t taps[] = {3, 7, 9};
  const auto out = eval_network(spec, params, x, taps);
  EXPECT_EQ(out.taps[2], out.logits);
  EXPECT_EQ(resume_network(spec, params, out.taps[0], 3), out.logits);
  EXPECT_EQ(resume_network(spec, params, out.taps[1], 7), out.logits);
  EXPECT_EQ(eval_network(spec, params, x).logits, out.logits);
}

TEST(Sgd, UpdateRule) {
  ParamSet p{{Tensor({1}, 1.0), Tensor({1}, 0.0)}};
  ParamSet g{{Tensor({1}, 0.25), Tensor({1}, 0.0)}};
  ParamSet v;
  sgd_step(p, g, 0.0, 0.9, v);
  EXPECT_EQ(p[0].weight[0], 1.0);
  v.clear();
  sgd_step(p, g, 1.0, 0.0, v);
  EXPECT_EQ(p[0].weight[0], 0.75);

  ParamSet q{{Tensor({1}, 0.0), Tensor({1}, 0.0)}};
  ParamSet one{{Tensor({1}, 1.0), Tensor({1}, 0.0)}};
  ParamSet vel;
  sgd_step(q, one, 0.1, 0.9, vel);
  sgd_step(q, one, 0.1, 0.9, vel);
  EXPECT_NEAR(q[0].weight[0], -0.29, 1e-15);
}

TEST(Network, PredictTakesFirstMaximum) {
  const Tensor logits({2, 3}, std::vector<double>{1, 3, 3, 0, 0, 0});
  EXPECT_EQ(predict(logits), (std::vector<int>{1, 0}));
  EXPECT_EQ(accuracy(logits, std::vector<int>{1, 2}), 0.5);
}

TEST(Network, GradientsDoNotDependOnBufferAddress) {
  const NetworkSpec spec{{LayerSpec::conv(4, 3), LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::dense(3)},
                         {1, 5, 5},
                         3};
  const auto params = init_params(spec, 2);
  const LabeledBatch batch{random_tensor({3, 1, 5, 5}, 3, 0, 1), {0, 1, 2}};
  const auto ref = backward(spec, params, batch);
  std::vector<std::vector<char>> shift;
  for (std::size_t k = 1; k < 16; ++k) {
    shift.emplace_back(k * 8);  // moves the next allocations around
    const ParamSet copy = params;
    const LabeledBatch b2{Tensor(batch.inputs), batch.labels};
    EXPECT_EQ(backward(spec, copy, b2).gradients, ref.gradients);
  }
}
