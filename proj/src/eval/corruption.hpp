#pragma once

#include <cstdint>
#include <string>

#include "tensor/tensor.hpp"

namespace smcdo {

enum class CorruptionKind { gaussian_noise, gaussian_blur, brightness, contrast, pixelate };

inline constexpr int kCorruptionLevels = 5;

const char* to_string(CorruptionKind k) noexcept;
CorruptionKind parse_corruption_kind(const std::string& s);

/// Severity parameter of a kind at level 1..5: noise sigma, blur sigma,
/// brightness shift, contrast scale, or pixelate downscale factor.
double corruption_severity(CorruptionKind kind, int level);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int level = 1;

  void validate() const;
  double severity() const { return corruption_severity(kind, level); }
  /// "<kind>-<level>", e.g. "contrast-4".
  std::string id() const;
  bool operator==(const CorruptionSpec&) const = default;
};

/// Applies the corruption to every image of a batch in [0,1]; the result is
/// clipped to [0,1]. Noise draws depend only on `seed` and the spec.
Tensor corrupt(const Tensor& images, const CorruptionSpec& spec, std::uint64_t seed);

// Building blocks, exposed for testing. None of them clip.
Tensor add_gaussian_noise(const Tensor& images, double sigma, std::uint64_t seed);
Tensor gaussian_blur(const Tensor& images, double sigma);
/// (x - m) * scale + m with m the mean of each channel of each image.
Tensor scale_contrast(const Tensor& images, double scale);
/// Splits each plane into floor(size / factor) boxes per axis (at least 1)
/// and replaces every pixel with the mean of its box.
Tensor pixelate(const Tensor& images, double factor);
Tensor clip_unit(const Tensor& images);

}  // namespace smcdo
