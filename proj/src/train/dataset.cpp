#include "train/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace smcdo {

void Dataset::validate(std::size_t num_classes) const {
  if (size() == 0) throw DataError("dataset is empty");
  const std::size_t expect = size() * labels_per_image();
  if (labels.size() != expect) throw DimensionError("labels", expect, labels.size(), "dataset");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
      throw DataError("dataset label " + std::to_string(l) + " outside [0, " + std::to_string(num_classes) + ")");
}

Dataset subset(const Dataset& d, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ArgumentError("subset: no indices");
  Shape s = d.images.shape();
  const std::size_t per = d.labels_per_image();
  Dataset out;
  out.task = d.task;
  s.n = indices.size();
  out.images = Tensor(s);
  out.labels.reserve(indices.size() * per);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= d.size()) throw DimensionError("batch", d.size(), src + 1, "subset index");
    auto from = d.images.sample(src);
    std::copy(from.begin(), from.end(), out.images.sample(i).begin());
    out.labels.insert(out.labels.end(), d.labels.begin() + static_cast<std::ptrdiff_t>(src * per),
                      d.labels.begin() + static_cast<std::ptrdiff_t>((src + 1) * per));
  }
  return out;
}

Tensor mask_tensor(const Dataset& d, std::size_t index) {
  const Shape s = d.images.shape();
  Tensor m(Shape{1, 1, s.h, s.w});
  const std::size_t per = d.labels_per_image();
  for (std::size_t i = 0; i < per; ++i) m[i] = d.labels[index * per + i];
  return m;
}

Normalization channel_statistics(const Tensor& images) {
  const Shape s = images.shape();
  Normalization norm;
  norm.mean.assign(s.c, 0.0);
  norm.stddev.assign(s.c, 0.0);
  const double count = static_cast<double>(s.n * s.plane());
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (double v : images.plane(n, c)) sum += v;
    const double mean = sum / count;
    double var = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (double v : images.plane(n, c)) var += (v - mean) * (v - mean);
    norm.mean[c] = mean;
    norm.stddev[c] = std::sqrt(var / count);
    if (norm.stddev[c] <= 0.0) norm.stddev[c] = 1.0;
  }
  return norm;
}

Tensor normalize(const Tensor& images, const Normalization& norm) {
  const Shape s = images.shape();
  if (norm.mean.size() != s.c) throw DimensionError("channels", norm.mean.size(), s.c, "normalize");
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = images.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - norm.mean[c]) / norm.stddev[c];
    }
  }
  return out;
}

}  // namespace smcdo
