#include "gensense/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "gensense/error.hpp"

namespace gensense {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto extent : shape_) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto extent : shape_) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), std::move(data_));
}

Tensor Tensor::slice(std::size_t first, std::size_t count) const {
  if (rank() == 0 || first + count > shape_[0] || count == 0) {
    throw ShapeError("slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") out of range for " + shape_string(shape_));
  }
  const std::size_t row = data_.size() / shape_[0];
  Shape shape = shape_;
  shape[0] = count;
  std::vector<double> data(data_.begin() + static_cast<std::ptrdiff_t>(first * row),
                           data_.begin() + static_cast<std::ptrdiff_t>((first + count) * row));
  return Tensor(std::move(shape), std::move(data));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("cannot stack an empty list of tensors");
  Shape shape{items.size()};
  shape.insert(shape.end(), items.front().shape().begin(), items.front().shape().end());
  std::vector<double> data;
  data.reserve(shape_size(shape));
  for (const auto& item : items) {
    if (item.shape() != items.front().shape()) {
      throw ShapeError("cannot stack " + shape_string(item.shape()) + " with " +
                       shape_string(items.front().shape()));
    }
    data.insert(data.end(), item.values().begin(), item.values().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("gather_rows needs at least one index");
  const std::size_t row = source.size() / source.dim(0);
  Shape shape = source.shape();
  shape[0] = indices.size();
  std::vector<double> data(indices.size() * row);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= source.dim(0)) throw ShapeError("gather_rows index out of range");
    std::memcpy(data.data() + i * row, source.data() + indices[i] * row, row * sizeof(double));
  }
  return Tensor(std::move(shape), std::move(data));
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace gensense
