#include "gensense/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gensense/bytes.hpp"
#include "gensense/error.hpp"
#include "gensense/text.hpp"

namespace gensense {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr int kSupersample = 4;

double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// Shape membership in unit coordinates (u, v), v pointing down.
bool inside(ShapeClass cls, double u, double v) {
  switch (cls) {
    case ShapeClass::disk:
      return u * u + v * v <= 1.0;
    case ShapeClass::square:
      return std::abs(u) <= 0.8 && std::abs(v) <= 0.8;
    case ShapeClass::cross:
      return (std::abs(u) <= 1.0 && std::abs(v) <= 0.33) || (std::abs(u) <= 0.33 && std::abs(v) <= 1.0);
    case ShapeClass::triangle: {
      const double e0 = edge(0.0, -1.0, 0.95, 0.75, u, v);
      const double e1 = edge(0.95, 0.75, -0.95, 0.75, u, v);
      const double e2 = edge(-0.95, 0.75, 0.0, -1.0, u, v);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
  return false;
}

std::uint8_t quantize(double p) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(p, 0.0, 1.0))); }

}  // namespace

void DatasetManifest::validate() const {
  if (num_classes < 2 || num_classes > kShapeClassCount) {
    throw ConfigError("num_classes must be between 2 and " + std::to_string(kShapeClassCount));
  }
  if (image_size < 8) throw ConfigError("image_size must be at least 8");
  for (auto [label, n] : {std::pair{"train", splits.train}, std::pair{"rank-eval", splits.rank_eval},
                          std::pair{"head-train", splits.head_train}, std::pair{"test", splits.test}}) {
    if (n == 0 || n % num_classes != 0) {
      throw ConfigError(std::string(label) + " split size " + std::to_string(n) +
                        " must be a positive multiple of num_classes (" + std::to_string(num_classes) + ")");
    }
  }
}

std::string DatasetManifest::describe() const {
  std::ostringstream os;
  os << "name = " << name << '\n'
     << "num_classes = " << num_classes << '\n'
     << "image_shape = 1x" << image_size << 'x' << image_size << '\n'
     << "train = " << splits.train << '\n'
     << "rank_eval = " << splits.rank_eval << '\n'
     << "head_train = " << splits.head_train << '\n'
     << "test = " << splits.test << '\n'
     << "seed = " << seed << '\n'
     << "modality_tag = " << modality_tag << '\n';
  return os.str();
}

void check_split_hygiene(const DatasetSplits& splits) {
  std::set<std::size_t> seen;
  for (const Split* s : {&splits.train, &splits.rank_eval, &splits.head_train, &splits.test}) {
    for (auto i : s->indices) {
      if (!seen.insert(i).second) throw Error("sample index " + std::to_string(i) + " appears in two splits");
    }
  }
}

Tensor render_shape(ShapeClass cls, std::size_t size, SplitMix64& rng) {
  const double s = static_cast<double>(size);
  const double cx = s / 2.0 + rng.uniform(-0.125, 0.125) * s;
  const double cy = s / 2.0 + rng.uniform(-0.125, 0.125) * s;
  const double radius = rng.uniform(0.18, 0.30) * s;
  // dark and bright levels; the shape takes either one
  const double dark = rng.uniform(0.0, 0.3);
  const double bright = rng.uniform(0.7, 1.0);
  const bool bright_shape = rng.uniform() < 0.5;
  const double fg = bright_shape ? bright : dark, bg = bright_shape ? dark : bright;
  Tensor image({1, size, size});
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSupersample;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSupersample;
          hits += inside(cls, (px - cx) / radius, (py - cy) / radius) ? 1 : 0;
        }
      }
      const double a = hits / double(kSupersample * kSupersample);
      const double p = bg + (fg - bg) * a;
      image[y * size + x] = quantize(p) / 255.0;
    }
  }
  return image;
}

DatasetSplits generate_dataset(const DatasetManifest& manifest) {
  manifest.validate();
  std::size_t next = 0;
  const auto make = [&](std::size_t count) {
    Split split;
    std::vector<Tensor> images;
    images.reserve(count);
    for (std::size_t i = 0; i < count; ++i, ++next) {
      const int label = static_cast<int>(i % manifest.num_classes);
      SplitMix64 rng = SplitMix64::derive(manifest.seed, next);
      images.push_back(render_shape(static_cast<ShapeClass>(label), manifest.image_size, rng));
      split.data.labels.push_back(label);
      split.indices.push_back(next);
    }
    split.data.inputs = stack(images);
    return split;
  };
  DatasetSplits out;
  out.train = make(manifest.splits.train);
  out.rank_eval = make(manifest.splits.rank_eval);
  out.head_train = make(manifest.splits.head_train);
  out.test = make(manifest.splits.test);
  check_split_hygiene(out);
  return out;
}

std::vector<std::uint8_t> encode_idx_images(const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 1) {
    throw ShapeError("IDX image export expects (n, 1, h, w), got " + shape_string(images.shape()));
  }
  ByteWriter w;
  w.u32be(kIdxImageMagic);
  w.u32be(static_cast<std::uint32_t>(images.dim(0)));
  w.u32be(static_cast<std::uint32_t>(images.dim(2)));
  w.u32be(static_cast<std::uint32_t>(images.dim(3)));
  for (double p : images.values()) w.u8(quantize(p));
  return std::move(w).take();
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const int> labels) {
  ByteWriter w;
  w.u32be(kIdxLabelMagic);
  w.u32be(static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) {
    if (y < 0 || y > 255) throw Error("label " + std::to_string(y) + " does not fit in u8");
    w.u8(static_cast<std::uint8_t>(y));
  }
  return std::move(w).take();
}

Tensor decode_idx_images(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  const auto magic = r.u32be();
  if (magic != kIdxImageMagic) {
    throw FormatError(context + ": bad IDX magic, expected 0x00000803, found 0x" + hex64(magic).substr(8));
  }
  const std::size_t n = r.u32be(), h = r.u32be(), w = r.u32be();
  if (n == 0 || h == 0 || w == 0) throw FormatError(context + ": empty IDX image tensor");
  if (r.remaining() != n * h * w) {
    throw FormatError(context + ": expected " + std::to_string(n * h * w) + " pixel bytes, found " +
                      std::to_string(r.remaining()));
  }
  Tensor images({n, 1, h, w});
  for (auto& v : images.values()) v = r.u8() / 255.0;
  return images;
}

std::vector<int> decode_idx_labels(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  const auto magic = r.u32be();
  if (magic != kIdxLabelMagic) {
    throw FormatError(context + ": bad IDX magic, expected 0x00000801, found 0x" + hex64(magic).substr(8));
  }
  const std::size_t n = r.u32be();
  if (r.remaining() != n) {
    throw FormatError(context + ": expected " + std::to_string(n) + " label bytes, found " +
                      std::to_string(r.remaining()));
  }
  std::vector<int> labels(n);
  for (auto& y : labels) y = r.u8();
  return labels;
}

void write_split(const std::filesystem::path& dir, const std::string& name, const Split& split) {
  write_file_atomic(dir / (name + "-images.idx3-ubyte"), encode_idx_images(split.data.inputs));
  write_file_atomic(dir / (name + "-labels.idx1-ubyte"), encode_idx_labels(split.data.labels));
}

Split read_split(const std::filesystem::path& dir, const std::string& name, std::size_t first_index) {
  const auto image_path = dir / (name + "-images.idx3-ubyte");
  const auto label_path = dir / (name + "-labels.idx1-ubyte");
  Split split;
  split.data.inputs = decode_idx_images(read_file(image_path), image_path.string());
  split.data.labels = decode_idx_labels(read_file(label_path), label_path.string());
  if (split.data.labels.size() != split.data.inputs.dim(0)) {
    throw FormatError(name + ": " + std::to_string(split.data.inputs.dim(0)) + " images but " +
                      std::to_string(split.data.labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < split.data.labels.size(); ++i) split.indices.push_back(first_index + i);
  return split;
}

void write_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest, const DatasetSplits& splits) {
  write_split(dir, "train", splits.train);
  write_split(dir, "rank-eval", splits.rank_eval);
  write_split(dir, "head-train", splits.head_train);
  write_split(dir, "test", splits.test);
  write_file_atomic(dir / "manifest.txt", manifest.describe());
}

DatasetSplits read_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest) {
  manifest.validate();
  const auto& s = manifest.splits;
  DatasetSplits out;
  out.train = read_split(dir, "train", 0);
  out.rank_eval = read_split(dir, "rank-eval", s.train);
  out.head_train = read_split(dir, "head-train", s.train + s.rank_eval);
  out.test = read_split(dir, "test", s.train + s.rank_eval + s.head_train);
  const auto expect = [&](const Split& split, std::size_t n, const char* name) {
    if (split.data.labels.size() != n) {
      throw FormatError(std::string(name) + " split holds " + std::to_string(split.data.labels.size()) +
                        " samples, manifest says " + std::to_string(n));
    }
  };
  expect(out.train, s.train, "train");
  expect(out.rank_eval, s.rank_eval, "rank-eval");
  expect(out.head_train, s.head_train, "head-train");
  expect(out.test, s.test, "test");
  check_split_hygiene(out);
  return out;
}

}  // namespace gensense
