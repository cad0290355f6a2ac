#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "train/dataset.hpp"

namespace smcdo {

/// 8-bit raster, interleaved channels (1 for PGM, 3 for PPM), row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Image&) const = default;
};

/// Binary P5/P6 with maxval 255; '#' comments are allowed between header
/// tokens. Throws DataError on anything else.
Image parse_netpbm(std::span<const std::uint8_t> bytes, const std::string& origin = "buffer");
Image read_netpbm(const std::string& path);
std::vector<std::uint8_t> encode_netpbm(const Image& img);
void write_netpbm(const std::string& path, const Image& img);

Image resize_nearest(const Image& img, std::size_t width, std::size_t height);

/// Channel-planar [0,1] tensor of a batch image and back (clamped, rounded).
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, std::size_t index);

/// Pairs `<name>.ppm` with `<name>.pgm` in `dir`. Images and masks are
/// resized (nearest) to size x size; mask bytes >= 128 become label 1. Pairs
/// are loaded in name order. Throws DataError on an unpaired file or a
/// malformed header.
Dataset load_segmentation_pairs(const std::string& dir, std::size_t size);

/// Entropy (nats, two classes) to grey levels: round-half-up of
/// 255 * h / ln 2, clamped to [0,255].
std::vector<std::uint8_t> entropy_to_gray(std::span<const double> entropy);

/// Writes plane `index` of an N x 1 x H x W entropy map as a P5 file.
void emit_uncertainty_map(const Tensor& entropy, std::size_t index, const std::string& path);

}  // namespace smcdo
