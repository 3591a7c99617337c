#include <gtest/gtest.h>

#include <cmath>

#include "gensense/degrade.hpp"
#include "gensense/error.hpp"
#include "support.hpp"

using namespace gensense;
using testsupport::random_tensor;

namespace {

// e^{-(x^2+y^2)/2} on offsets -2..2, normalized: the center is 1 / (sum of the 1-D profile)^2.
double sigma1_center() {
  const double s = 1 + 2 * std::exp(-0.5) + 2 * std::exp(-2.0);
  return 1.0 / (s * s);
}

double total_variation(const Tensor& img) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  double tv = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (x + 1 < w) tv += std::abs(img[y * w + x + 1] - img[y * w + x]);
      if (y + 1 < h) tv += std::abs(img[(y + 1) * w + x] - img[y * w + x]);
    }
  }
  return tv;
}

}  // namespace

TEST(Kernel, SizesAndCenterValue) {
  EXPECT_EQ(gaussian_kernel_size(1), 5u);
  EXPECT_EQ(gaussian_kernel_size(2), 9u);
  EXPECT_EQ(gaussian_kernel_size(0.3), 3u);
  const Tensor k = gaussian_kernel(1);
  EXPECT_EQ(k.shape(), (Shape{5, 5}));
  EXPECT_NEAR(k[12], sigma1_center(), 1e-15);
  EXPECT_NEAR(k[12], 0.16210, 5e-6);
  EXPECT_THROW(gaussian_kernel(0), ConfigError);
  EXPECT_THROW(gaussian_kernel(-1), ConfigError);
}

TEST(Kernel, NormalizedAndMirrorSymmetric) {
  for (double s : {0.4, 1.0, 1.7, 3.0}) {
    const Tensor k = gaussian_kernel(s);
    const std::size_t n = k.dim(0);
    double sum = 0;
    for (double v : k.values()) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        EXPECT_EQ(k[y * n + x], k[(n - 1 - y) * n + x]);
        EXPECT_EQ(k[y * n + x], k[y * n + (n - 1 - x)]);
      }
    }
  }
}

TEST(Blur, ZeroSigmaIsBitExactIdentity) {
  const Tensor img = random_tensor({1, 8, 8}, 3, 0, 1);
  EXPECT_EQ(apply_blur(img, 0), img);
  EXPECT_EQ(degrade_batch(img.reshaped({1, 1, 8, 8}), DegradationSpec::blur(0)), img.reshaped({1, 1, 8, 8}));
}

TEST(Blur, ImpulseGivesKernelCenter) {
  Tensor img({1, 5, 5});
  img[12] = 1.0;
  EXPECT_NEAR(apply_blur(img, 1)[12], sigma1_center(), 1e-15);
}

TEST(Blur, ConstantImageStaysConstant) {
  const Tensor img({2, 9, 9}, 0.37);
  const Tensor out = apply_blur(img, 2);
  for (double v : out.values()) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(Blur, Linear) {
  const Tensor a = random_tensor({1, 12, 12}, 5, 0, 1), b = random_tensor({1, 12, 12}, 6, 0, 1);
  Tensor mix(a.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 0.3 * a[i] - 1.7 * b[i];
  const Tensor ba = apply_blur(a, 1.5), bb = apply_blur(b, 1.5), bm = apply_blur(mix, 1.5);
  for (std::size_t i = 0; i < mix.size(); ++i) EXPECT_NEAR(bm[i], 0.3 * ba[i] - 1.7 * bb[i], 1e-10);
}

TEST(Blur, ReducesTotalVariation) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Tensor img = random_tensor({1, 16, 16}, seed, 0, 1);
    for (double s : {0.5, 1.0, 3.0}) EXPECT_LE(total_variation(apply_blur(img, s)), total_variation(img));
  }
}

TEST(Blur, KernelTooLargeForImage) {
  const Tensor img({1, 4, 4});
  // sigma 2 -> k = 9 > 2*4 - 1
  try {
    apply_blur(img, 2);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("smaller sigma_b"), std::string::npos);
  }
  EXPECT_NO_THROW(apply_blur(Tensor({1, 5, 5}), 2));
}

TEST(Noise, ZeroSigmaAndDeterminism) {
  const Tensor img = random_tensor({1, 6, 6}, 8, 0, 1);
  EXPECT_EQ(apply_awgn(img, 0, 99), img);
  EXPECT_EQ(apply_awgn(img, 0.2, 5), apply_awgn(img, 0.2, 5));
  EXPECT_NE(apply_awgn(img, 0.2, 5), apply_awgn(img, 0.2, 6));
  const Tensor loud = apply_awgn(img, 2.0, 1);
  for (double v : loud.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Noise, StandardDeviationOnMidGray) {
  const Tensor img({1, 1000, 1000}, 0.5);
  const Tensor noisy = apply_awgn(img, 0.1, 2024);
  double sum = 0, sq = 0;
  for (double v : noisy.values()) {
    sum += v - 0.5;
    sq += (v - 0.5) * (v - 0.5);
  }
  const double n = static_cast<double>(noisy.size());
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd, 0.1, 0.001);
}

TEST(Noise, BatchSplitInvariance) {
  const Tensor batch = random_tensor({4, 1, 5, 5}, 9, 0, 1);
  const auto spec = DegradationSpec::awgn(0.1, 77);
  const Tensor whole = degrade_batch(batch, spec);
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor one = apply_awgn(batch.slice(i, 1).reshaped({1, 5, 5}), 0.1, SplitMix64::derive_seed(77, i));
    EXPECT_EQ(whole.slice(i, 1).reshaped({1, 5, 5}), one);
  }
}

TEST(Modality, InvertAndGamma) {
  const Tensor img = random_tensor({1, 4, 4}, 10, 0, 1);
  const ModalitySpec inv = ModalitySpec::parse("invert");
  EXPECT_EQ(apply_modality(apply_modality(img, inv), inv), img);
  EXPECT_EQ(apply_modality(img, ModalitySpec::parse("invert_gamma:1")), apply_modality(img, inv));
  const Tensor p({1, 1, 1}, 0.25);
  EXPECT_EQ(apply_modality(p, ModalitySpec::parse("invert_gamma:2"))[0], 0.5625);
  EXPECT_THROW(ModalitySpec::parse("thermal"), ConfigError);
  EXPECT_THROW(ModalitySpec::parse("invert_gamma:-1"), ConfigError);
}

TEST(DegradationSpec, TextRoundTrip) {
  for (const auto& d : {DegradationSpec::identity(), DegradationSpec::blur(1.5), DegradationSpec::awgn(0.05, 12),
                        DegradationSpec::modality_shift(ModalitySpec::parse("invert_gamma:2"), "RGB")}) {
    // the sensor tag is not part of the text form
    const auto back = DegradationSpec::parse(d.describe());
    EXPECT_EQ(back.describe(), d.describe());
    EXPECT_EQ(back.kind, d.kind);
    EXPECT_EQ(back.sigma, d.sigma);
    EXPECT_EQ(back.seed, d.seed);
    EXPECT_EQ(back.modality, d.modality);
  }
  EXPECT_THROW(DegradationSpec::parse("blur:-1"), ConfigError);
  EXPECT_THROW(DegradationSpec::parse("sharpen:2"), ConfigError);
}

TEST(Degrade, IdentityIsNoOp) {
  const Tensor batch = random_tensor({3, 1, 6, 6}, 11, 0, 1);
  EXPECT_EQ(degrade_batch(batch, DegradationSpec::identity()), batch);
  EXPECT_EQ(degrade_batch(batch, DegradationChain{}), batch);
}
