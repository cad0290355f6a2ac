#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "tensor/tensor.hpp"

namespace smcdo {

struct AugmentConfig {
  std::size_t pad_crop = 4;
  bool horizontal_flip = true;

  bool operator==(const AugmentConfig&) const = default;
};

/// Crop offset into the zero-padded image, in [0, 2*pad_crop] per axis.
struct AugmentDraw {
  std::size_t dy = 0;
  std::size_t dx = 0;
  bool flip = false;
};

AugmentDraw draw_augment(const AugmentConfig& config, std::mt19937_64& rng);

/// Applies one draw to sample `n` of `x` in place. Padded pixels read as 0.
void apply_augment(Tensor& x, std::size_t n, const AugmentDraw& draw, std::size_t pad_crop);

/// Independent draw per sample. When `draws` is given it receives them.
Tensor augment(const Tensor& batch, const AugmentConfig& config, std::mt19937_64& rng,
               std::vector<AugmentDraw>* draws = nullptr);

/// Segmentation variant: the per-pixel labels (n, y, x) follow the same crop
/// and flip as their image; padded label pixels become 0.
Tensor augment(const Tensor& batch, std::vector<int>& pixel_labels, const AugmentConfig& config,
               std::mt19937_64& rng);

/// Mirrors every sample left to right.
Tensor flip_horizontal(const Tensor& x);

}  // namespace smcdo
