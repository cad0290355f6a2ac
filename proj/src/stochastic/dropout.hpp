#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tensor/ops.hpp"
#include "tensor/tensor.hpp"

namespace smcdo {

inline constexpr double kMaxDropoutRate = 0.95;

enum class DropoutMode { spatial, element };

/// Kept activations are multiplied by 1/(1 - rate). This is the only
/// supported convention and applies at train and inference time alike.
enum class DropoutScaling { inverted };

/// Dropout configuration with independent train-time and inference-time
/// rates. Using rate_inf > rate_train (contrastive rates) is allowed but not
/// required.
struct DropoutSpec {
  DropoutMode mode = DropoutMode::spatial;
  double rate_train = 0.0;
  double rate_inf = 0.0;
  DropoutScaling scaling = DropoutScaling::inverted;

  void validate() const;
  bool operator==(const DropoutSpec&) const = default;
};

const char* to_string(DropoutMode mode) noexcept;
DropoutMode parse_dropout_mode(const std::string& s);

void validate_rate(double rate);
double inverted_scale(double rate);

/// Identifies one independent random stream: one stochastic layer of one
/// MC sample (branch) in one experiment.
struct MaskSeed {
  std::uint64_t experiment_seed = 0;
  std::uint64_t branch_index = 0;
  std::uint64_t layer_index = 0;
};

/// Counter-based hash of the seed triple; every sampler derives its stream
/// from this value only.
std::uint64_t stream_key(const MaskSeed& seed) noexcept;

/// Per-channel keep pattern. At least one channel is always kept.
struct ChannelMask {
  std::vector<std::uint8_t> kept;
  double rate = 0.0;

  std::size_t channels() const noexcept { return kept.size(); }
  std::size_t kept_count() const noexcept;
  std::vector<std::size_t> kept_indices() const;
  /// '1' for kept, '0' for dropped, channel order.
  std::string bits() const;

  bool operator==(const ChannelMask&) const = default;
};

/// Keeps each channel independently with probability 1 - rate. An all-dropped
/// draw is discarded and redrawn from the same stream.
ChannelMask sample_spatial_mask(std::size_t channels, double rate, const MaskSeed& seed);

/// Zeroes dropped channels everywhere and scales kept channels by
/// 1/(1 - rate). The mask applies to every sample in the batch.
Tensor apply_spatial_dropout(const Tensor& x, const ChannelMask& mask, double rate);

/// Batch variant: samples [b*block, (b+1)*block) use masks[b]. When `ctx` is
/// given, the per-(sample, channel) multipliers are recorded for backward().
Tensor apply_spatial_dropout(const Tensor& x, std::span<const ChannelMask> masks, std::size_t block, double rate,
                             OpContext* ctx = nullptr);

/// Drops individual activations i.i.d. with probability `rate`. When `ctx` is
/// given, the per-element multipliers are recorded for backward().
Tensor apply_element_dropout(const Tensor& x, double rate, const MaskSeed& seed, OpContext* ctx = nullptr);

/// Convolution restricted to the kept input channels: gathers the matching
/// kernel slices, folds the 1/(1 - rate) scale into them, and convolves the
/// reduced channel set. Equal to conv2d(apply_spatial_dropout(x, mask, rate))
/// up to rounding.
Tensor fused_dropout_conv(const Tensor& x, const ConvParams& params, const ChannelMask& mask, double rate);

/// Batch variant of the fused path: samples [b*block, (b+1)*block) use masks[b].
Tensor fused_dropout_conv(const Tensor& x, const ConvParams& params, std::span<const ChannelMask> masks,
                          std::size_t block, double rate);

/// Kernel slice O x kept x kH x kW for the kept channels, multiplied by `scale`.
Tensor slice_kernel(const Tensor& weight, std::span<const std::size_t> kept, double scale);

/// Multiply-add count N*O*H'*W'*I*kH*kW; with a mask, the kept channel count
/// replaces I.
std::uint64_t flop_count(const ConvParams& params, const Shape& input_shape,
                         const std::optional<ChannelMask>& mask = std::nullopt);

}  // namespace smcdo
