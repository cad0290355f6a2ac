#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tensor/error.hpp"

namespace smcdo {

/// Batch x channel x height x width extents. Every axis is at least 1.
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t numel() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  std::size_t sample() const noexcept { return c * h * w; }

  bool operator==(const Shape&) const = default;

  std::string str() const;
};

/// Dense fp64 tensor in row-major N,C,H,W order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Contiguous H*W plane of one channel of one sample.
  std::span<double> plane(std::size_t n, std::size_t c) noexcept {
    return std::span<double>(data_).subspan((n * shape_.c + c) * shape_.plane(), shape_.plane());
  }
  std::span<const double> plane(std::size_t n, std::size_t c) const noexcept {
    return std::span<const double>(data_).subspan((n * shape_.c + c) * shape_.plane(), shape_.plane());
  }

  /// Contiguous C*H*W block of one sample.
  std::span<double> sample(std::size_t n) noexcept {
    return std::span<double>(data_).subspan(n * shape_.sample(), shape_.sample());
  }
  std::span<const double> sample(std::size_t n) const noexcept {
    return std::span<const double>(data_).subspan(n * shape_.sample(), shape_.sample());
  }

  /// Samples [first, first + count) as a new tensor.
  Tensor slice_batch(std::size_t first, std::size_t count) const;

  /// Same data viewed under a different shape with equal element count.
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  std::vector<double> data_ = std::vector<double>(1, 0.0);
};

/// Stacks `copies` replicas of `t` along the batch axis (replica-major).
Tensor repeat_batch(const Tensor& t, std::size_t copies);

/// Concatenates tensors with equal C,H,W along the batch axis.
Tensor concat_batch(std::span<const Tensor> parts);

double max_abs_diff(const Tensor& a, const Tensor& b);

void require_shape(const Shape& expected, const Shape& actual, const std::string& context);

}  // namespace smcdo
