#include "eval/corruption.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "stochastic/dropout.hpp"
#include "tensor/error.hpp"

namespace smcdo {

namespace {

constexpr std::array<std::array<double, kCorruptionLevels>, 5> kSeverity{{
    {0.04, 0.08, 0.12, 0.16, 0.20},  // gaussian_noise sigma
    {0.5, 1.0, 1.5, 2.0, 2.5},       // gaussian_blur sigma
    {0.05, 0.1, 0.15, 0.2, 0.3},     // brightness shift
    {0.85, 0.7, 0.55, 0.4, 0.3},     // contrast scale
    {1.25, 1.5, 2.0, 3.0, 4.0},      // pixelate factor
}};

constexpr const char* kNames[] = {"gaussian_noise", "gaussian_blur", "brightness", "contrast", "pixelate"};

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

}  // namespace

const char* to_string(CorruptionKind k) noexcept { return kNames[static_cast<int>(k)]; }

CorruptionKind parse_corruption_kind(const std::string& s) {
  for (int i = 0; i < 5; ++i)
    if (s == kNames[i]) return static_cast<CorruptionKind>(i);
  throw ConfigError("unknown corruption kind '" + s + "'");
}

double corruption_severity(CorruptionKind kind, int level) {
  if (level < 1 || level > kCorruptionLevels)
    throw ArgumentError("corruption level " + std::to_string(level) + " outside 1..5");
  return kSeverity[static_cast<std::size_t>(kind)][static_cast<std::size_t>(level - 1)];
}

void CorruptionSpec::validate() const { (void)corruption_severity(kind, level); }

std::string CorruptionSpec::id() const { return std::string(to_string(kind)) + "-" + std::to_string(level); }

Tensor add_gaussian_noise(const Tensor& images, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sigma);
  Tensor out = images;
  for (double& v : out.data()) v += nd(rng);
  return out;
}

Tensor gaussian_blur(const Tensor& images, double sigma) {
  const Shape s = images.shape();
  const auto k = gaussian_kernel(sigma);
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  Tensor tmp(s), out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = images.plane(n, c);
      auto mid = tmp.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (std::ptrdiff_t i = -r; i <= r; ++i)
            acc += k[static_cast<std::size_t>(i + r)] * src[y * s.w + clamp_index(static_cast<std::ptrdiff_t>(x) + i, s.w)];
          mid[y * s.w + x] = acc;
        }
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (std::ptrdiff_t i = -r; i <= r; ++i)
            acc += k[static_cast<std::size_t>(i + r)] * mid[clamp_index(static_cast<std::ptrdiff_t>(y) + i, s.h) * s.w + x];
          dst[y * s.w + x] = acc;
        }
    }
  return out;
}

Tensor scale_contrast(const Tensor& images, double scale) {
  const Shape s = images.shape();
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = images.plane(n, c);
      double mean = 0.0;
      for (double v : src) mean += v;
      mean /= static_cast<double>(src.size());
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - mean) * scale + mean;
    }
  return out;
}

Tensor pixelate(const Tensor& images, double factor) {
  if (!(factor >= 1.0)) throw ArgumentError("pixelate: factor must be >= 1");
  const Shape s = images.shape();
  const std::size_t sh = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(s.h) / factor)));
  const std::size_t sw = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(s.w) / factor)));
  // Each pixel takes the mean of the box that contains it.
  std::vector<std::size_t> row_block(s.h), col_block(s.w);
  for (std::size_t j = 0; j < sh; ++j)
    for (std::size_t y = j * s.h / sh; y < (j + 1) * s.h / sh; ++y) row_block[y] = j;
  for (std::size_t j = 0; j < sw; ++j)
    for (std::size_t x = j * s.w / sw; x < (j + 1) * s.w / sw; ++x) col_block[x] = j;
  Tensor out(s);
  std::vector<double> small(sh * sw);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto src = images.plane(n, c);
      for (std::size_t y = 0; y < sh; ++y)
        for (std::size_t x = 0; x < sw; ++x) {
          const std::size_t y0 = y * s.h / sh, y1 = (y + 1) * s.h / sh;
          const std::size_t x0 = x * s.w / sw, x1 = (x + 1) * s.w / sw;
          double acc = 0.0;
          for (std::size_t yy = y0; yy < y1; ++yy)
            for (std::size_t xx = x0; xx < x1; ++xx) acc += src[yy * s.w + xx];
          small[y * sw + x] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
        }
      auto dst = out.plane(n, c);
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) dst[y * s.w + x] = small[row_block[y] * sw + col_block[x]];
    }
  return out;
}

Tensor clip_unit(const Tensor& images) {
  Tensor out = images;
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Tensor corrupt(const Tensor& images, const CorruptionSpec& spec, std::uint64_t seed) {
  const double sev = spec.severity();
  switch (spec.kind) {
    case CorruptionKind::gaussian_noise:
      return clip_unit(add_gaussian_noise(
          images, sev, stream_key({seed, static_cast<std::uint64_t>(spec.kind), static_cast<std::uint64_t>(spec.level)})));
    case CorruptionKind::gaussian_blur: return clip_unit(gaussian_blur(images, sev));
    case CorruptionKind::brightness: {
      Tensor out = images;
      for (double& v : out.data()) v += sev;
      return clip_unit(out);
    }
    case CorruptionKind::contrast: return clip_unit(scale_contrast(images, sev));
    case CorruptionKind::pixelate: return clip_unit(pixelate(images, sev));
  }
  throw ArgumentError("corrupt: unknown kind");
}

}  // namespace smcdo
