#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gensense {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Image batches use (batch, channel, height, width).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 4-D element access, (n, c, h, w).
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Start of the (h, w) plane of sample n, channel c in a 4-D tensor.
  double* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_[1] + c) * shape_[2] * shape_[3]; }
  const double* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_[1] + c) * shape_[2] * shape_[3];
  }

  // Same data, new shape of equal size.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  // Rows [first, first + count) along axis 0.
  Tensor slice(std::size_t first, std::size_t count) const;

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Stack equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

// Gather rows of `source` (axis 0) at `indices` into a new tensor.
Tensor gather_rows(const Tensor& source, std::span<const std::size_t> indices);

double max_abs_difference(const Tensor& a, const Tensor& b);

}  // namespace gensense
