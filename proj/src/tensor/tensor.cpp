#include "tensor/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace smcdo {

namespace {

void validate_extents(const Shape& s) {
  if (s.n == 0) throw DimensionError("batch", 1, 0, "tensor extents must be >= 1");
  if (s.c == 0) throw DimensionError("channels", 1, 0, "tensor extents must be >= 1");
  if (s.h == 0) throw DimensionError("height", 1, 0, "tensor extents must be >= 1");
  if (s.w == 0) throw DimensionError("width", 1, 0, "tensor extents must be >= 1");
}

}  // namespace

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  validate_extents(shape_);
  data_.assign(shape_.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  validate_extents(shape_);
  if (data_.size() != shape_.numel()) {
    throw DimensionError("data length", shape_.numel(), data_.size(), "tensor " + shape_.str());
  }
}

Tensor Tensor::slice_batch(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > shape_.n) {
    throw DimensionError("batch", shape_.n, first + count, "slice_batch");
  }
  Shape s = shape_;
  s.n = count;
  auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * shape_.sample());
  return Tensor(s, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * shape_.sample())));
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(shape, data_); }

Tensor repeat_batch(const Tensor& t, std::size_t copies) {
  if (copies == 0) throw ArgumentError("repeat_batch: copies must be >= 1");
  Shape s = t.shape();
  s.n *= copies;
  std::vector<double> out;
  out.reserve(s.numel());
  for (std::size_t i = 0; i < copies; ++i) out.insert(out.end(), t.values().begin(), t.values().end());
  return Tensor(s, std::move(out));
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("concat_batch: no parts");
  Shape s = parts.front().shape();
  s.n = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.c != s.c) throw DimensionError("channels", s.c, ps.c, "concat_batch");
    if (ps.h != s.h) throw DimensionError("height", s.h, ps.h, "concat_batch");
    if (ps.w != s.w) throw DimensionError("width", s.w, ps.w, "concat_batch");
    s.n += ps.n;
  }
  std::vector<double> out;
  out.reserve(s.numel());
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor(s, std::move(out));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void require_shape(const Shape& expected, const Shape& actual, const std::string& context) {
  if (expected.n != actual.n) throw DimensionError("batch", expected.n, actual.n, context);
  if (expected.c != actual.c) throw DimensionError("channels", expected.c, actual.c, context);
  if (expected.h != actual.h) throw DimensionError("height", expected.h, actual.h, context);
  if (expected.w != actual.w) throw DimensionError("width", expected.w, actual.w, context);
}

}  // namespace smcdo
