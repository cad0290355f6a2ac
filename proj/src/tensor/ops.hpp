#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tensor/tensor.hpp"

namespace smcdo {

/// Convolution kernel, O x I x kH x kW, with per-output-channel bias.
/// Zero padding is symmetric.
struct ConvParams {
  Tensor weight;
  std::vector<double> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const noexcept { return weight.shape().n; }
  std::size_t in_channels() const noexcept { return weight.shape().c; }
  std::size_t kernel_h() const noexcept { return weight.shape().h; }
  std::size_t kernel_w() const noexcept { return weight.shape().w; }

  void validate() const;
  /// Output extents for an input of shape `in`; throws DimensionError when the
  /// channel count or spatial arithmetic does not fit.
  Shape output_shape(const Shape& in) const;

  bool operator==(const ConvParams&) const = default;
};

struct BatchNormParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double epsilon = 1e-5;
  // Weight of the current batch in the running-statistics update.
  double momentum = 0.1;

  std::size_t channels() const noexcept { return gamma.size(); }
  void validate() const;

  bool operator==(const BatchNormParams&) const = default;
};

/// Fully connected layer. `weight` is O x I x 1 x 1 where I is the flattened
/// C*H*W size of one input sample.
struct DenseParams {
  Tensor weight;
  std::vector<double> bias;

  std::size_t out_features() const noexcept { return weight.shape().n; }
  std::size_t in_features() const noexcept { return weight.shape().c; }

  bool operator==(const DenseParams&) const = default;
};

enum class OpKind {
  conv2d,
  batchnorm,
  relu,
  maxpool2d,
  global_avgpool,
  dense,
  softmax,
  residual_add,
  upsample_nearest,
  spatial_dropout,
};

const char* op_name(OpKind kind) noexcept;

/// What a forward op must leave behind for its backward pass.
struct OpContext {
  OpKind kind = OpKind::relu;
  bool recorded = false;
  Tensor input;
  Tensor output;
  const ConvParams* conv = nullptr;
  const BatchNormParams* bn = nullptr;
  const DenseParams* dense = nullptr;
  std::vector<std::size_t> indices;  // maxpool argmax
  std::vector<double> scale;         // batch-norm inverse std, or per-(sample,channel) dropout multipliers
  std::size_t window = 0;
  std::size_t stride = 0;
  std::size_t factor = 0;
  bool batch_stats = false;  // batch-norm normalized with batch rather than running statistics
};

struct Gradients {
  Tensor input;
  std::vector<double> weight;  // conv/dense weight, or batch-norm gamma
  std::vector<double> bias;    // conv/dense bias, or batch-norm beta
};

// Forward ops. Passing a context records what backward() needs.

Tensor conv2d(const Tensor& x, const ConvParams& p, OpContext* ctx = nullptr);

/// Convolves samples [first, first + count) of `x` using only the input
/// channels listed in `channels`; `weight` is O x channels.size() x kH x kW.
/// Results land in the same sample rows of `out`, which must already have the
/// output shape.
void conv2d_into(const Tensor& x, std::size_t first, std::size_t count, std::span<const std::size_t> channels,
                 const Tensor& weight, std::span<const double> bias, std::size_t stride, std::size_t padding,
                 Tensor& out);

Tensor batchnorm_inference(const Tensor& x, const BatchNormParams& p, OpContext* ctx = nullptr);
/// Normalizes with batch statistics and updates the running statistics in `p`.
Tensor batchnorm_train(const Tensor& x, BatchNormParams& p, OpContext* ctx = nullptr);

Tensor relu(const Tensor& x, OpContext* ctx = nullptr);
/// Ties keep the first element in row-major window scan order.
Tensor maxpool2d(const Tensor& x, std::size_t window, std::size_t stride, OpContext* ctx = nullptr);
Tensor global_avgpool(const Tensor& x, OpContext* ctx = nullptr);
Tensor dense(const Tensor& x, const DenseParams& p, OpContext* ctx = nullptr);
/// Softmax over the channel axis, independently at every (n, h, w).
Tensor softmax(const Tensor& x, OpContext* ctx = nullptr);
Tensor residual_add(const Tensor& a, const Tensor& b, OpContext* ctx = nullptr);
Tensor upsample_nearest(const Tensor& x, std::size_t factor, OpContext* ctx = nullptr);

/// Analytic gradients of the recorded op. For residual_add both inputs receive
/// `grad_output` unchanged, so only `input` is filled. Throws StateError when
/// the context was never recorded.
Gradients backward(const OpContext& ctx, const Tensor& grad_output, bool want_input_grad = true);

}  // namespace smcdo
