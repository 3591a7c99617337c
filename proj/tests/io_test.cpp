#include <gtest/gtest.h>

#include <filesystem>

#include "gensense/bytes.hpp"
#include "gensense/error.hpp"
#include "gensense/prng.hpp"
#include "gensense/text.hpp"
#include "support.hpp"

using namespace gensense;

TEST(SplitMix64, PublishedFirstOutput) {
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xE220A8397B1DCDAFULL);
}

TEST(SplitMix64, StreamsAreSeedDetermined) {
  SplitMix64 a(42), b(42), c(43);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a.next(), b.next());
  EXPECT_NE(SplitMix64(0).next(), SplitMix64(1).next());
  EXPECT_NE(SplitMix64::derive_seed(1, 0), SplitMix64::derive_seed(1, 1));
  EXPECT_EQ(SplitMix64::derive_seed(9, 3), SplitMix64::derive_seed(9, 3));
  (void)c;
}

TEST(SplitMix64, UniformAndBelowRanges) {
  SplitMix64 rng(3);
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const auto k = rng.below(5);
    ASSERT_LT(k, 5u);
    ++hist[k];
  }
  for (int h : hist) EXPECT_GT(h, 850);
}

TEST(Text, FormatAndParse) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(parse_double(format_double(1.0 / 3.0), "x"), 1.0 / 3.0);
  EXPECT_EQ(format_fixed(0.40428, 4), "0.4043");
  EXPECT_EQ(parse_double_list("0, 1,2.5", "levels"), (std::vector<double>{0, 1, 2.5}));
  EXPECT_THROW(parse_double("1.5x", "lr"), ConfigError);
  EXPECT_THROW(parse_u64("-3", "seed"), ConfigError);
  EXPECT_THROW(parse_double_list("1,,2", "levels"), ConfigError);
  EXPECT_EQ(trim("  a b \t"), "a b");
}

TEST(Text, Fnv1aVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Bytes, EndiannessAndTruncation) {
  ByteWriter w;
  w.u16le(0x0102);
  w.u32be(0x00000803);
  w.f64le(-2.5);
  const auto& b = w.bytes();
  EXPECT_EQ(b[0], 0x02);
  EXPECT_EQ(b[1], 0x01);
  EXPECT_EQ(b[2], 0x00);
  EXPECT_EQ(b[5], 0x03);
  ByteReader r(b, "buf");
  EXPECT_EQ(r.u16le(), 0x0102);
  EXPECT_EQ(r.u32be(), 0x803u);
  EXPECT_EQ(r.f64le(), -2.5);
  EXPECT_TRUE(r.at_end());
  EXPECT_THROW(r.u8(), FormatError);
}

TEST(Bytes, AtomicWriteLeavesNoPartial) {
  const auto dir = testsupport::scratch_dir("bytes");
  write_file_atomic(dir / "x.txt", std::string_view("hello"));
  EXPECT_EQ(read_file(dir / "x.txt").size(), 5u);
  EXPECT_FALSE(std::filesystem::exists(dir / "x.txt.partial"));
  EXPECT_THROW(read_file(dir / "missing"), Error);
}
