#include <gtest/gtest.h>

#include <string>

#include "gensense/baseline.hpp"
#include "gensense/error.hpp"
#include "support.hpp"

using namespace gensense;
using testsupport::random_tensor;

namespace {

NetworkSpec tiny_net() {
  return {{LayerSpec::conv(4, 3), LayerSpec::relu(), LayerSpec::maxpool(2, 2), LayerSpec::conv(4, 3),
           LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dense(3)},
          {1, 6, 6},
          3};
}

LabeledBatch tiny_data(std::size_t n, std::uint64_t seed) {
  LabeledBatch b{random_tensor({n, 1, 6, 6}, seed, 0, 1), {}};
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % 3));
  return b;
}

Checkpoint trained(std::uint64_t seed) {
  TrainHyper h;
  h.epochs = 3;
  h.batch_size = 4;
  h.seed = seed;
  return train_baseline(tiny_net(), tiny_data(12, 1), h, "tiny");
}

}  // namespace

TEST(Baseline, ZeroLearningRateKeepsInit) {
  TrainHyper h;
  h.lr = 0.0;
  h.epochs = 2;
  h.batch_size = 4;
  h.seed = 9;
  const auto ckpt = train_baseline(tiny_net(), tiny_data(8, 2), h, "tiny");
  EXPECT_EQ(ckpt.params, init_params(tiny_net(), 9));
  EXPECT_EQ(ckpt.meta.epochs, 2);
  EXPECT_EQ(ckpt.meta.dataset_id, "tiny");
}

TEST(Baseline, OverfitsSingleSample) {
  TrainHyper h;
  h.epochs = 200;
  h.batch_size = 1;
  const auto ckpt = train_baseline(tiny_net(), tiny_data(1, 3), h, "one");
  EXPECT_LT(ckpt.meta.final_train_loss, 0.01);
}

TEST(Baseline, SameSeedSameCheckpoint) {
  EXPECT_EQ(trained(5), trained(5));
  EXPECT_EQ(params_hash(trained(5).params), params_hash(trained(5).params));
  EXPECT_NE(params_hash(trained(5).params), params_hash(trained(6).params));
}

TEST(Baseline, EpochCallbackSeesEveryEpoch) {
  TrainHyper h;
  h.epochs = 4;
  h.batch_size = 4;
  std::vector<int> seen;
  double last = -1;
  h.on_epoch = [&](int e, double loss) {
    seen.push_back(e);
    last = loss;
  };
  const auto ckpt = train_baseline(tiny_net(), tiny_data(8, 4), h, "cb");
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_EQ(last, ckpt.meta.final_train_loss);
}

TEST(Taps, DefaultsAndShapes) {
  const auto ckpt = trained(5);
  const auto ext = default_extractor_tap(ckpt.spec);
  const auto rank = default_ranking_tap(ckpt.spec);
  EXPECT_EQ(rank.layer_index, 3u);
  EXPECT_EQ(ext.layer_index, 6u);
  const Tensor x = random_tensor({5, 1, 6, 6}, 8, 0, 1);
  EXPECT_EQ(extract_features(ckpt, ext, x).shape(), (Shape{5, 6}));
  EXPECT_EQ(extract_features(ckpt, rank, x).shape(), (Shape{5, 4, 3, 3}));
  EXPECT_EQ(extract_features(ckpt, {8, TapRole::extractor}, x), eval_network(ckpt.spec, ckpt.params, x).logits);
  EXPECT_THROW(check_tap(ckpt.spec, {5, TapRole::ranking}), Error);
  EXPECT_THROW(check_tap(ckpt.spec, {3, TapRole::extractor}), Error);
  EXPECT_NO_THROW(check_tap(ckpt.spec, {7, TapRole::extractor}));
  EXPECT_THROW(check_tap(ckpt.spec, {42, TapRole::extractor}), Error);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  const auto ckpt = trained(5);
  const auto dir = testsupport::scratch_dir("ckpt");
  save_checkpoint(ckpt, dir / "b.gsck");
  const auto back = load_checkpoint(dir / "b.gsck");
  EXPECT_EQ(back, ckpt);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ckpt));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto bytes = encode_checkpoint(trained(5));
  auto cut = bytes;
  cut.resize(bytes.size() - 3);
  EXPECT_THROW(decode_checkpoint(cut, "cut"), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra, "extra"), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic, "magic"), FormatError);
  auto version = bytes;
  version[4] = 9;
  EXPECT_THROW(decode_checkpoint(version, "version"), FormatError);
}

TEST(Checkpoint, DeclaredShapeMismatchNamesLayer) {
  auto bytes = encode_checkpoint(trained(5));
  const std::string text(bytes.begin(), bytes.end());
  const auto at = text.find("param 3 ");
  ASSERT_NE(at, std::string::npos);
  ASSERT_EQ(bytes[at + 8], '4');
  bytes[at + 8] = '5';
  try {
    decode_checkpoint(bytes, "shape");
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 3"), std::string::npos) << e.what();
  }
}
