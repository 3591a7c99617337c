#include <gtest/gtest.h>

#include <set>

#include "gensense/bytes.hpp"
#include "gensense/dataset.hpp"
#include "gensense/error.hpp"
#include "support.hpp"

using namespace gensense;

namespace {

DatasetManifest small_manifest() {
  DatasetManifest m;
  m.image_size = 16;
  m.splits = {40, 8, 8, 12};
  m.seed = 3;
  return m;
}

}  // namespace

TEST(Idx, MagicBytes) {
  const auto img = encode_idx_images(Tensor({2, 1, 3, 4}, 0.5));
  ASSERT_EQ(img.size(), 16u + 24u);
  EXPECT_EQ((std::vector<std::uint8_t>(img.begin(), img.begin() + 4)), (std::vector<std::uint8_t>{0, 0, 8, 3}));
  EXPECT_EQ(img[7], 2);
  EXPECT_EQ(img[11], 3);
  EXPECT_EQ(img[15], 4);
  const std::vector<int> labels{1, 0, 3};
  const auto lab = encode_idx_labels(labels);
  EXPECT_EQ((std::vector<std::uint8_t>(lab.begin(), lab.begin() + 4)), (std::vector<std::uint8_t>{0, 0, 8, 1}));
  EXPECT_EQ(lab.size(), 8u + 3u);
}

TEST(Idx, BadMagicNamesExpected) {
  auto lab = encode_idx_labels(std::vector<int>{1, 2});
  try {
    decode_idx_images(lab, "labels-as-images");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("0x00000803"), std::string::npos) << e.what();
  }
  auto img = encode_idx_images(Tensor({1, 1, 2, 2}));
  try {
    decode_idx_labels(img, "images-as-labels");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("0x00000801"), std::string::npos) << e.what();
  }
  img.pop_back();
  EXPECT_THROW(decode_idx_images(img, "short"), FormatError);
  EXPECT_THROW(encode_idx_labels(std::vector<int>{256}), Error);
  EXPECT_THROW(encode_idx_images(Tensor({1, 2, 2, 2})), ShapeError);
}

TEST(Idx, ByteExactRoundTrip) {
  const auto splits = generate_dataset(small_manifest());
  const auto bytes = encode_idx_images(splits.train.data.inputs);
  const Tensor back = decode_idx_images(bytes, "train");
  EXPECT_EQ(back, splits.train.data.inputs);
  EXPECT_EQ(encode_idx_images(back), bytes);
  EXPECT_EQ(decode_idx_labels(encode_idx_labels(splits.train.data.labels), "l"), splits.train.data.labels);
}

TEST(Dataset, BalancedBoundedDeterministic) {
  const auto m = small_manifest();
  const auto a = generate_dataset(m), b = generate_dataset(m);
  EXPECT_EQ(a.train.data.inputs, b.train.data.inputs);
  EXPECT_EQ(a.test.data.labels, b.test.data.labels);
  EXPECT_EQ(a.train.data.inputs.shape(), (Shape{40, 1, 16, 16}));
  std::vector<int> counts(4, 0);
  for (int y : a.train.data.labels) ++counts.at(y);
  for (int c : counts) EXPECT_EQ(c, 10);
  for (double v : a.train.data.inputs.values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  auto other = m;
  other.seed = 4;
  EXPECT_NE(generate_dataset(other).train.data.inputs, a.train.data.inputs);
}

TEST(Dataset, SplitsAreDisjoint) {
  const auto s = generate_dataset(small_manifest());
  std::set<std::size_t> all;
  for (const Split* p : {&s.train, &s.rank_eval, &s.head_train, &s.test}) all.insert(p->indices.begin(), p->indices.end());
  EXPECT_EQ(all.size(), 68u);
  auto broken = s;
  broken.test.indices[0] = broken.train.indices[5];
  EXPECT_THROW(check_split_hygiene(broken), Error);
}

TEST(Dataset, ManifestValidation) {
  auto m = small_manifest();
  m.splits.train = 42;
  try {
    m.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train"), std::string::npos);
  }
  m = small_manifest();
  m.num_classes = 1;
  EXPECT_THROW(m.validate(), ConfigError);
  m = small_manifest();
  m.image_size = 4;
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Dataset, DiskRoundTrip) {
  const auto dir = testsupport::scratch_dir("dataset");
  const auto m = small_manifest();
  const auto s = generate_dataset(m);
  write_dataset(dir, m, s);
  const auto back = read_dataset(dir, m);
  EXPECT_EQ(back.train.data.inputs, s.train.data.inputs);
  EXPECT_EQ(back.test.data.labels, s.test.data.labels);
  EXPECT_EQ(back.head_train.indices, s.head_train.indices);
  auto wrong = m;
  wrong.splits.test = 16;
  EXPECT_THROW(read_dataset(dir, wrong), FormatError);
}
