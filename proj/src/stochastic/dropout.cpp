#include "stochastic/dropout.hpp"

#include <cmath>

namespace smcdo {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// splitmix64 sequence over a fixed key.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : state_(key) {}
  std::uint64_t next() noexcept { return mix64(state_ += kGolden); }
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

void check_blocks(const Shape& s, std::span<const ChannelMask> masks, std::size_t block, const char* where) {
  if (block == 0 || masks.size() * block != s.n)
    throw DimensionError("batch", masks.size() * block, s.n, std::string(where) + ": mask blocks do not cover batch");
  for (const auto& m : masks)
    if (m.channels() != s.c) throw DimensionError("channels", s.c, m.channels(), std::string(where) + ": mask length");
}

}  // namespace

const char* to_string(DropoutMode mode) noexcept { return mode == DropoutMode::spatial ? "spatial" : "element"; }

DropoutMode parse_dropout_mode(const std::string& s) {
  if (s == "spatial") return DropoutMode::spatial;
  if (s == "element") return DropoutMode::element;
  throw ConfigError("unknown dropout mode '" + s + "'");
}

void validate_rate(double rate) {
  if (!(rate >= 0.0 && rate <= kMaxDropoutRate))
    throw ArgumentError("dropout rate " + std::to_string(rate) + " outside [0, 0.95]");
}

double inverted_scale(double rate) {
  validate_rate(rate);
  return 1.0 / (1.0 - rate);
}

void DropoutSpec::validate() const {
  validate_rate(rate_train);
  validate_rate(rate_inf);
}

std::uint64_t stream_key(const MaskSeed& seed) noexcept {
  std::uint64_t h = mix64(seed.experiment_seed ^ 0x5EED5EED5EED5EEDull);
  h = mix64(h ^ (seed.branch_index * kGolden + 1));
  h = mix64(h ^ (seed.layer_index * 0xD1B54A32D192ED03ull + 2));
  return h;
}

std::size_t ChannelMask::kept_count() const noexcept {
  std::size_t k = 0;
  for (auto v : kept) k += v ? 1 : 0;
  return k;
}

std::vector<std::size_t> ChannelMask::kept_indices() const {
  std::vector<std::size_t> idx;
  idx.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i)
    if (kept[i]) idx.push_back(i);
  return idx;
}

std::string ChannelMask::bits() const {
  std::string s(kept.size(), '0');
  for (std::size_t i = 0; i < kept.size(); ++i)
    if (kept[i]) s[i] = '1';
  return s;
}

ChannelMask sample_spatial_mask(std::size_t channels, double rate, const MaskSeed& seed) {
  if (channels == 0) throw ArgumentError("sample_spatial_mask: channels must be >= 1");
  validate_rate(rate);
  ChannelMask mask;
  mask.rate = rate;
  mask.kept.resize(channels);
  Stream stream(stream_key(seed));
  const double keep = 1.0 - rate;
  do {
    for (auto& k : mask.kept) k = stream.uniform() < keep ? 1 : 0;
  } while (mask.kept_count() == 0);
  return mask;
}

Tensor apply_spatial_dropout(const Tensor& x, const ChannelMask& mask, double rate) {
  return apply_spatial_dropout(x, std::span<const ChannelMask>(&mask, 1), x.shape().n, rate);
}

Tensor apply_spatial_dropout(const Tensor& x, std::span<const ChannelMask> masks, std::size_t block, double rate,
                             OpContext* ctx) {
  const Shape s = x.shape();
  check_blocks(s, masks, block, "apply_spatial_dropout");
  const double scale = inverted_scale(rate);
  Tensor out(s);
  std::vector<double> multipliers(s.n * s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    const ChannelMask& m = masks[n / block];
    for (std::size_t c = 0; c < s.c; ++c) {
      const double f = m.kept[c] ? scale : 0.0;
      multipliers[n * s.c + c] = f;
      auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      if (f == 0.0) continue;
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * f;
    }
  }
  if (ctx) {
    *ctx = OpContext{};
    ctx->kind = OpKind::spatial_dropout;
    ctx->recorded = true;
    ctx->input = x;
    ctx->scale = std::move(multipliers);
  }
  return out;
}

Tensor apply_element_dropout(const Tensor& x, double rate, const MaskSeed& seed, OpContext* ctx) {
  const double scale = inverted_scale(rate);
  Stream stream(stream_key(seed));
  const double keep = 1.0 - rate;
  Tensor out(x.shape());
  std::vector<double> multipliers(ctx ? x.numel() : 0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double f = stream.uniform() < keep ? scale : 0.0;
    out[i] = x[i] * f;
    if (ctx) multipliers[i] = f;
  }
  if (ctx) {
    *ctx = OpContext{};
    ctx->kind = OpKind::spatial_dropout;
    ctx->recorded = true;
    ctx->input = x;
    ctx->scale = std::move(multipliers);
  }
  return out;
}

Tensor slice_kernel(const Tensor& weight, std::span<const std::size_t> kept, double scale) {
  const Shape ws = weight.shape();
  Tensor out(Shape{ws.n, kept.size(), ws.h, ws.w});
  for (std::size_t o = 0; o < ws.n; ++o) {
    for (std::size_t k = 0; k < kept.size(); ++k) {
      auto src = weight.plane(o, kept[k]);
      auto dst = out.plane(o, k);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * scale;
    }
  }
  return out;
}

Tensor fused_dropout_conv(const Tensor& x, const ConvParams& params, const ChannelMask& mask, double rate) {
  return fused_dropout_conv(x, params, std::span<const ChannelMask>(&mask, 1), x.shape().n, rate);
}

Tensor fused_dropout_conv(const Tensor& x, const ConvParams& params, std::span<const ChannelMask> masks,
                          std::size_t block, double rate) {
  params.validate();
  const Shape s = x.shape();
  check_blocks(s, masks, block, "fused_dropout_conv");
  Tensor out(params.output_shape(s));
  const double scale = inverted_scale(rate);
  for (std::size_t b = 0; b < masks.size(); ++b) {
    const auto kept = masks[b].kept_indices();
    if (kept.empty()) throw ArgumentError("fused_dropout_conv: mask keeps no channel");
    const Tensor w = slice_kernel(params.weight, kept, scale);
    conv2d_into(x, b * block, block, kept, w, params.bias, params.stride, params.padding, out);
  }
  return out;
}

std::uint64_t flop_count(const ConvParams& params, const Shape& input_shape, const std::optional<ChannelMask>& mask) {
  const Shape os = params.output_shape(input_shape);
  std::uint64_t channels = params.in_channels();
  if (mask) {
    if (mask->channels() != params.in_channels())
      throw DimensionError("channels", params.in_channels(), mask->channels(), "flop_count mask");
    channels = mask->kept_count();
  }
  return static_cast<std::uint64_t>(os.n) * os.c * os.h * os.w * channels * params.kernel_h() * params.kernel_w();
}

}  // namespace smcdo
