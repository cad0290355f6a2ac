#include "train/augment.hpp"

#include "tensor/error.hpp"

namespace smcdo {

namespace {

// Shifts one H x W plane by the crop offset (zero fill) and optionally mirrors it.
template <typename T>
void transform_plane(std::span<T> plane, std::size_t h, std::size_t w, const AugmentDraw& d, std::size_t pad,
                     std::vector<T>& scratch) {
  scratch.assign(plane.begin(), plane.end());
  for (std::size_t y = 0; y < h; ++y) {
    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + d.dy) - static_cast<std::ptrdiff_t>(pad);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t ox = d.flip ? w - 1 - x : x;
      const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(ox + d.dx) - static_cast<std::ptrdiff_t>(pad);
      T v{};
      if (sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx < static_cast<std::ptrdiff_t>(w))
        v = scratch[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
      plane[y * w + x] = v;
    }
  }
}

}  // namespace

AugmentDraw draw_augment(const AugmentConfig& config, std::mt19937_64& rng) {
  AugmentDraw d;
  if (config.pad_crop > 0) {
    std::uniform_int_distribution<std::size_t> offset(0, 2 * config.pad_crop);
    d.dy = offset(rng);
    d.dx = offset(rng);
  }
  if (config.horizontal_flip) d.flip = std::bernoulli_distribution(0.5)(rng);
  return d;
}

void apply_augment(Tensor& x, std::size_t n, const AugmentDraw& draw, std::size_t pad_crop) {
  const Shape s = x.shape();
  if (n >= s.n) throw ArgumentError("apply_augment: sample index out of range");
  if (draw.dy > 2 * pad_crop || draw.dx > 2 * pad_crop) throw ArgumentError("apply_augment: crop offset out of range");
  std::vector<double> scratch;
  for (std::size_t c = 0; c < s.c; ++c) transform_plane(x.plane(n, c), s.h, s.w, draw, pad_crop, scratch);
}

Tensor augment(const Tensor& batch, const AugmentConfig& config, std::mt19937_64& rng,
               std::vector<AugmentDraw>* draws) {
  Tensor out = batch;
  if (draws) draws->clear();
  for (std::size_t n = 0; n < batch.shape().n; ++n) {
    const AugmentDraw d = draw_augment(config, rng);
    if (draws) draws->push_back(d);
    if (d.dy != config.pad_crop || d.dx != config.pad_crop || d.flip) apply_augment(out, n, d, config.pad_crop);
  }
  return out;
}

Tensor augment(const Tensor& batch, std::vector<int>& pixel_labels, const AugmentConfig& config,
               std::mt19937_64& rng) {
  const Shape s = batch.shape();
  if (pixel_labels.size() != s.n * s.plane())
    throw DimensionError("labels", s.n * s.plane(), pixel_labels.size(), "augment");
  Tensor out = batch;
  std::vector<int> scratch;
  for (std::size_t n = 0; n < s.n; ++n) {
    const AugmentDraw d = draw_augment(config, rng);
    if (d.dy == config.pad_crop && d.dx == config.pad_crop && !d.flip) continue;
    apply_augment(out, n, d, config.pad_crop);
    transform_plane(std::span<int>(pixel_labels).subspan(n * s.plane(), s.plane()), s.h, s.w, d, config.pad_crop,
                    scratch);
  }
  return out;
}

Tensor flip_horizontal(const Tensor& x) {
  Tensor out = x;
  for (std::size_t n = 0; n < x.shape().n; ++n) apply_augment(out, n, AugmentDraw{0, 0, true}, 0);
  return out;
}

}  // namespace smcdo
