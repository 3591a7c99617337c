#include "gensense/degrade.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>

#include "gensense/error.hpp"
#include "gensense/prng.hpp"
#include "gensense/text.hpp"

namespace gensense {

namespace {

void check_image(const Tensor& image, const char* op) {
  if (image.rank() != 3) {
    throw ShapeError(std::string(op) + " expects a (channels, height, width) image, got " +
                     shape_string(image.shape()));
  }
}

// Mirror without repeating the edge sample: -1 -> 1, n -> n - 2.
std::size_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

ModalitySpec ModalitySpec::parse(std::string_view id) {
  if (id == "invert") return {};
  constexpr std::string_view prefix = "invert_gamma:";
  if (id.starts_with(prefix)) {
    ModalitySpec m;
    m.transform = ModalityTransform::invert_gamma;
    m.gamma = parse_double(id.substr(prefix.size()), "invert_gamma exponent");
    if (!(m.gamma > 0.0) || !std::isfinite(m.gamma)) throw ConfigError("invert_gamma exponent must be positive");
    return m;
  }
  throw ConfigError("unknown modality transform '" + std::string(id) + "' (expected invert or invert_gamma:<g>)");
}

std::string ModalitySpec::describe() const {
  if (transform == ModalityTransform::invert) return "invert";
  return "invert_gamma:" + format_double(gamma);
}

DegradationSpec DegradationSpec::identity() { return {}; }

DegradationSpec DegradationSpec::blur(double sigma_b) {
  if (!(sigma_b >= 0.0) || !std::isfinite(sigma_b)) throw ConfigError("blur sigma must be a non-negative number");
  DegradationSpec d;
  d.kind = DegradationKind::blur;
  d.sigma = sigma_b;
  return d;
}

DegradationSpec DegradationSpec::awgn(double sigma_n, std::uint64_t seed) {
  if (!(sigma_n >= 0.0) || !std::isfinite(sigma_n)) throw ConfigError("noise sigma must be a non-negative number");
  DegradationSpec d;
  d.kind = DegradationKind::awgn;
  d.sigma = sigma_n;
  d.seed = seed;
  return d;
}

DegradationSpec DegradationSpec::modality_shift(ModalitySpec modality, std::string tag) {
  DegradationSpec d;
  d.kind = DegradationKind::modality;
  d.modality = modality;
  d.modality_tag = std::move(tag);
  return d;
}

std::string DegradationSpec::describe() const {
  switch (kind) {
    case DegradationKind::identity: return "identity";
    case DegradationKind::blur: return "blur:" + format_double(sigma);
    case DegradationKind::awgn: return "awgn:" + format_double(sigma) + ":" + std::to_string(seed);
    case DegradationKind::modality: return "modality:" + modality.describe();
  }
  return "unknown";
}

DegradationSpec DegradationSpec::parse(std::string_view text) {
  if (text == "identity") return identity();
  if (text.starts_with("blur:")) return blur(parse_double(text.substr(5), "blur sigma"));
  if (text.starts_with("awgn:")) {
    const auto rest = text.substr(5);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) throw ConfigError("awgn degradation needs awgn:<sigma>:<seed>");
    return awgn(parse_double(rest.substr(0, colon), "noise sigma"), parse_u64(rest.substr(colon + 1), "noise seed"));
  }
  if (text.starts_with("modality:")) return modality_shift(ModalitySpec::parse(text.substr(9)), "modality");
  throw ConfigError("unknown degradation '" + std::string(text) + "'");
}

std::size_t gaussian_kernel_size(double sigma_b) {
  if (!(sigma_b > 0.0) || !std::isfinite(sigma_b)) {
    throw ConfigError("gaussian kernel needs sigma_b > 0 (route sigma_b = 0 to identity)");
  }
  return 2 * static_cast<std::size_t>(std::ceil(2.0 * sigma_b)) + 1;
}

Tensor gaussian_kernel(double sigma_b) {
  const std::size_t k = gaussian_kernel_size(sigma_b);
  const auto radius = static_cast<std::ptrdiff_t>(k / 2);
  Tensor kernel({k, k});
  double sum = 0.0;
  for (std::ptrdiff_t y = -radius; y <= radius; ++y) {
    for (std::ptrdiff_t x = -radius; x <= radius; ++x) {
      const double r2 = static_cast<double>(x * x + y * y);
      const double v = std::exp(-r2 / (2.0 * sigma_b * sigma_b));
      kernel[static_cast<std::size_t>((y + radius) * static_cast<std::ptrdiff_t>(k) + x + radius)] = v;
      sum += v;
    }
  }
  for (auto& v : kernel.values()) v /= sum;
  return kernel;
}

Tensor apply_blur(const Tensor& image, double sigma_b) {
  check_image(image, "blur");
  if (!(sigma_b >= 0.0) || !std::isfinite(sigma_b)) throw ConfigError("blur sigma must be a non-negative number");
  if (sigma_b == 0.0) return image;
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::size_t k = gaussian_kernel_size(sigma_b);
  if (k > 2 * std::min(h, w) - 1) {
    throw ConfigError("blur kernel of size " + std::to_string(k) + " (sigma_b " + format_double(sigma_b) +
                      ") exceeds reflect padding for a " + std::to_string(h) + "x" + std::to_string(w) +
                      " image; use a smaller sigma_b");
  }
  const Tensor kernel = gaussian_kernel(sigma_b);
  const auto radius = static_cast<std::ptrdiff_t>(k / 2);
  const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
  Tensor out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = image.data() + ch * h * w;
    double* dst = out.data() + ch * h * w;
    for (std::ptrdiff_t y = 0; y < hh; ++y) {
      for (std::ptrdiff_t x = 0; x < ww; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy) {
          const double* row = src + reflect(y + dy, hh) * w;
          const double* krow = kernel.data() + static_cast<std::size_t>(dy + radius) * k + radius;
          for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) acc += krow[dx] * row[reflect(x + dx, ww)];
        }
        dst[static_cast<std::size_t>(y * ww + x)] = acc;
      }
    }
  }
  return out;
}

Tensor apply_awgn(const Tensor& image, double sigma_n, std::uint64_t seed) {
  if (!(sigma_n >= 0.0) || !std::isfinite(sigma_n)) throw ConfigError("noise sigma must be a non-negative number");
  if (sigma_n == 0.0) return image;
  SplitMix64 rng(seed);
  Tensor out = image;
  for (auto& v : out.values()) v = std::clamp(v + sigma_n * rng.gaussian(), 0.0, 1.0);
  return out;
}

Tensor apply_modality(const Tensor& image, const ModalitySpec& modality) {
  Tensor out = image;
  switch (modality.transform) {
    case ModalityTransform::invert:
      for (auto& v : out.values()) v = 1.0 - v;
      break;
    case ModalityTransform::invert_gamma:
      for (auto& v : out.values()) v = std::pow(1.0 - v, modality.gamma);
      break;
  }
  return out;
}

Tensor apply_degradation(const Tensor& image, const DegradationSpec& degradation) {
  switch (degradation.kind) {
    case DegradationKind::identity: return image;
    case DegradationKind::blur: return apply_blur(image, degradation.sigma);
    case DegradationKind::awgn: return apply_awgn(image, degradation.sigma, degradation.seed);
    case DegradationKind::modality: return apply_modality(image, degradation.modality);
  }
  throw Error("unknown degradation kind");
}

Tensor degrade_batch(const Tensor& batch, const DegradationSpec& degradation) {
  if (batch.rank() != 4) throw ShapeError("degrade_batch expects (batch, channels, height, width)");
  if (degradation.kind == DegradationKind::identity) return batch;
  const Shape image_shape(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t per = shape_size(image_shape);
  Tensor out(batch.shape());
  for (std::size_t i = 0; i < batch.dim(0); ++i) {
    Tensor image(image_shape, std::vector<double>(batch.data() + i * per, batch.data() + (i + 1) * per));
    DegradationSpec d = degradation;
    if (d.kind == DegradationKind::awgn) d.seed = SplitMix64::derive_seed(degradation.seed, i);
    const Tensor result = apply_degradation(image, d);
    std::memcpy(out.data() + i * per, result.data(), per * sizeof(double));
  }
  return out;
}

Tensor degrade_batch(const Tensor& batch, std::span<const DegradationSpec> chain) {
  Tensor out = batch;
  for (const auto& d : chain) out = degrade_batch(out, d);
  return out;
}

}  // namespace gensense
