#include "tensor/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace smcdo {

namespace {

struct ConvGeometry {
  std::size_t in_h, in_w, out_h, out_w, kh, kw, stride, pad;
};

// Unfolds the listed channels of one C x H x W sample into a
// (channels * kh * kw) x (out_h * out_w) matrix.
void im2col(const double* x, std::span<const std::size_t> channels, const ConvGeometry& g, double* cols) {
  const std::size_t cols_per_row = g.out_h * g.out_w;
  std::size_t row = 0;
  for (std::size_t ch : channels) {
    const double* plane = x + ch * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        double* dst = cols + row * cols_per_row;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          double* drow = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill(drow, drow + g.out_w, 0.0);
            continue;
          }
          const double* srow = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            drow[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) ? 0.0 : srow[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col over all channels: accumulates columns back into the sample.
void col2im(const double* cols, std::size_t channels, const ConvGeometry& g, double* x) {
  const std::size_t cols_per_row = g.out_h * g.out_w;
  std::size_t row = 0;
  for (std::size_t ch = 0; ch < channels; ++ch) {
    double* plane = x + ch * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        const double* src = cols + row * cols_per_row;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          double* drow = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) drow[ix] += src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

bool is_identity_list(std::span<const std::size_t> channels, std::size_t total) {
  if (channels.size() != total) return false;
  for (std::size_t i = 0; i < channels.size(); ++i)
    if (channels[i] != i) return false;
  return true;
}

std::vector<std::size_t> all_channels(std::size_t c) {
  std::vector<std::size_t> idx(c);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

void record(OpContext* ctx, OpKind kind, const Tensor& input) {
  if (!ctx) return;
  *ctx = OpContext{};
  ctx->kind = kind;
  ctx->recorded = true;
  ctx->input = input;
}

Gradients conv_backward(const OpContext& ctx, const Tensor& gout, bool want_input) {
  const ConvParams& p = *ctx.conv;
  const Shape in = ctx.input.shape();
  const Shape os = p.output_shape(in);
  require_shape(os, gout.shape(), "conv2d backward");
  const ConvGeometry g{in.h, in.w, os.h, os.w, p.kernel_h(), p.kernel_w(), p.stride, p.padding};
  const auto rows = static_cast<int>(in.c * g.kh * g.kw);
  const auto cols_n = static_cast<int>(os.h * os.w);
  const auto out_c = static_cast<int>(os.c);

  Gradients grads;
  grads.weight.assign(p.weight.numel(), 0.0);
  grads.bias.assign(os.c, 0.0);
  if (want_input) grads.input = Tensor(in);

  const auto channels = all_channels(in.c);
  std::vector<double> cols(static_cast<std::size_t>(rows) * cols_n);
  std::vector<double> gcols(want_input ? cols.size() : 0);
  for (std::size_t n = 0; n < in.n; ++n) {
    const double* go = gout.sample(n).data();
    im2col(ctx.input.sample(n).data(), channels, g, cols.data());
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_c, rows, cols_n, 1.0, go, cols_n, cols.data(), cols_n,
                1.0, grads.weight.data(), rows);
    for (std::size_t o = 0; o < os.c; ++o) {
      const double* row = go + o * os.plane();
      double s = 0.0;
      for (std::size_t i = 0; i < os.plane(); ++i) s += row[i];
      grads.bias[o] += s;
    }
    if (want_input) {
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, rows, cols_n, out_c, 1.0, p.weight.data().data(), rows, go,
                  cols_n, 0.0, gcols.data(), cols_n);
      col2im(gcols.data(), in.c, g, grads.input.sample(n).data());
    }
  }
  return grads;
}

Gradients batchnorm_backward(const OpContext& ctx, const Tensor& gout) {
  const BatchNormParams& p = *ctx.bn;
  const Shape s = ctx.input.shape();
  require_shape(s, gout.shape(), "batchnorm backward");
  Gradients grads;
  grads.input = Tensor(s);
  grads.weight.assign(s.c, 0.0);
  grads.bias.assign(s.c, 0.0);
  const double m = static_cast<double>(s.n * s.plane());
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      auto gp = gout.plane(n, c);
      auto xh = ctx.output.plane(n, c);  // normalized input
      for (std::size_t i = 0; i < gp.size(); ++i) {
        sum_g += gp[i];
        sum_gx += gp[i] * xh[i];
      }
    }
    grads.weight[c] = sum_gx;
    grads.bias[c] = sum_g;
    const double inv_std = ctx.scale[c];
    const double gamma = p.gamma[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      auto gp = gout.plane(n, c);
      auto xh = ctx.output.plane(n, c);
      auto gi = grads.input.plane(n, c);
      if (ctx.batch_stats) {
        for (std::size_t i = 0; i < gp.size(); ++i)
          gi[i] = gamma * inv_std / m * (m * gp[i] - sum_g - xh[i] * sum_gx);
      } else {
        for (std::size_t i = 0; i < gp.size(); ++i) gi[i] = gamma * inv_std * gp[i];
      }
    }
  }
  return grads;
}

}  // namespace

const char* op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::conv2d: return "conv2d";
    case OpKind::batchnorm: return "batchnorm";
    case OpKind::relu: return "relu";
    case OpKind::maxpool2d: return "maxpool2d";
    case OpKind::global_avgpool: return "global_avgpool";
    case OpKind::dense: return "dense";
    case OpKind::softmax: return "softmax";
    case OpKind::residual_add: return "residual_add";
    case OpKind::upsample_nearest: return "upsample_nearest";
    case OpKind::spatial_dropout: return "spatial_dropout";
  }
  return "unknown";
}

void ConvParams::validate() const {
  if (bias.size() != out_channels()) throw DimensionError("bias length", out_channels(), bias.size(), "conv params");
  if (stride == 0) throw ArgumentError("conv params: stride must be positive");
}

Shape ConvParams::output_shape(const Shape& in) const {
  if (in.c != in_channels()) throw DimensionError("channels", in_channels(), in.c, "conv2d input");
  const std::size_t ph = in.h + 2 * padding;
  const std::size_t pw = in.w + 2 * padding;
  if (ph < kernel_h()) throw DimensionError("height", kernel_h(), ph, "conv2d padded input smaller than kernel");
  if (pw < kernel_w()) throw DimensionError("width", kernel_w(), pw, "conv2d padded input smaller than kernel");
  return Shape{in.n, out_channels(), (ph - kernel_h()) / stride + 1, (pw - kernel_w()) / stride + 1};
}

void BatchNormParams::validate() const {
  const std::size_t c = gamma.size();
  if (beta.size() != c) throw DimensionError("beta length", c, beta.size(), "batchnorm params");
  if (running_mean.size() != c) throw DimensionError("running_mean length", c, running_mean.size(), "batchnorm params");
  if (running_var.size() != c) throw DimensionError("running_var length", c, running_var.size(), "batchnorm params");
  if (epsilon < 0.0) throw ArgumentError("batchnorm params: epsilon must be non-negative");
  for (double v : running_var)
    if (v < 0.0) throw ArgumentError("batchnorm params: running_var must be non-negative");
}

void conv2d_into(const Tensor& x, std::size_t first, std::size_t count, std::span<const std::size_t> channels,
                 const Tensor& weight, std::span<const double> bias, std::size_t stride, std::size_t padding,
                 Tensor& out) {
  const Shape in = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != channels.size()) throw DimensionError("kernel input channels", channels.size(), ws.c, "conv2d");
  if (bias.size() != ws.n) throw DimensionError("bias length", ws.n, bias.size(), "conv2d");
  for (std::size_t ch : channels)
    if (ch >= in.c) throw DimensionError("channels", in.c, ch + 1, "conv2d channel index");
  if (first + count > in.n) throw DimensionError("batch", in.n, first + count, "conv2d sample range");
  if (in.h + 2 * padding < ws.h) throw DimensionError("height", ws.h, in.h + 2 * padding, "conv2d");
  if (in.w + 2 * padding < ws.w) throw DimensionError("width", ws.w, in.w + 2 * padding, "conv2d");
  const ConvGeometry g{in.h, in.w, (in.h + 2 * padding - ws.h) / stride + 1, (in.w + 2 * padding - ws.w) / stride + 1,
                       ws.h, ws.w, stride, padding};
  const Shape expect{in.n, ws.n, g.out_h, g.out_w};
  require_shape(expect, out.shape(), "conv2d output");

  const auto rows = static_cast<int>(channels.size() * g.kh * g.kw);
  const auto cols_n = static_cast<int>(g.out_h * g.out_w);
  const auto out_c = static_cast<int>(ws.n);
  const bool direct = g.kh == 1 && g.kw == 1 && stride == 1 && padding == 0 && is_identity_list(channels, in.c);
  std::vector<double> cols(direct ? 0 : static_cast<std::size_t>(rows) * cols_n);
  for (std::size_t n = first; n < first + count; ++n) {
    const double* b = direct ? x.sample(n).data() : cols.data();
    if (!direct) im2col(x.sample(n).data(), channels, g, cols.data());
    double* y = out.sample(n).data();
    for (std::size_t o = 0; o < ws.n; ++o) std::fill(y + o * cols_n, y + (o + 1) * cols_n, bias[o]);
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_c, cols_n, rows, 1.0, weight.data().data(), rows, b,
                cols_n, 1.0, y, cols_n);
  }
}

Tensor conv2d(const Tensor& x, const ConvParams& p, OpContext* ctx) {
  p.validate();
  Tensor out(p.output_shape(x.shape()));
  const auto channels = all_channels(x.shape().c);
  conv2d_into(x, 0, x.shape().n, channels, p.weight, p.bias, p.stride, p.padding, out);
  record(ctx, OpKind::conv2d, x);
  if (ctx) ctx->conv = &p;
  return out;
}

Tensor batchnorm_inference(const Tensor& x, const BatchNormParams& p, OpContext* ctx) {
  const Shape s = x.shape();
  if (s.c != p.channels()) throw DimensionError("channels", p.channels(), s.c, "batchnorm");
  Tensor out(s);
  Tensor normalized = ctx ? Tensor(s) : Tensor();
  std::vector<double> inv_std(s.c);
  for (std::size_t c = 0; c < s.c; ++c) {
    inv_std[c] = 1.0 / std::sqrt(p.running_var[c] + p.epsilon);
    for (std::size_t n = 0; n < s.n; ++n) {
      auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        const double xh = (src[i] - p.running_mean[c]) * inv_std[c];
        dst[i] = xh * p.gamma[c] + p.beta[c];
        if (ctx) normalized.plane(n, c)[i] = xh;
      }
    }
  }
  if (ctx) {
    record(ctx, OpKind::batchnorm, x);
    ctx->bn = &p;
    ctx->output = std::move(normalized);
    ctx->scale = std::move(inv_std);
    ctx->batch_stats = false;
  }
  return out;
}

Tensor batchnorm_train(const Tensor& x, BatchNormParams& p, OpContext* ctx) {
  const Shape s = x.shape();
  if (s.c != p.channels()) throw DimensionError("channels", p.channels(), s.c, "batchnorm");
  const double m = static_cast<double>(s.n * s.plane());
  Tensor out(s);
  Tensor normalized(s);
  std::vector<double> inv_std(s.c);
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (double v : x.plane(n, c)) mean += v;
    mean /= m;
    double var = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (double v : x.plane(n, c)) var += (v - mean) * (v - mean);
    var /= m;
    inv_std[c] = 1.0 / std::sqrt(var + p.epsilon);
    for (std::size_t n = 0; n < s.n; ++n) {
      auto src = x.plane(n, c);
      auto nrm = normalized.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        nrm[i] = (src[i] - mean) * inv_std[c];
        dst[i] = nrm[i] * p.gamma[c] + p.beta[c];
      }
    }
    const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
    p.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean;
    p.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * unbiased;
  }
  if (ctx) {
    record(ctx, OpKind::batchnorm, x);
    ctx->bn = &p;
    ctx->output = std::move(normalized);
    ctx->scale = std::move(inv_std);
    ctx->batch_stats = true;
  }
  return out;
}

Tensor relu(const Tensor& x, OpContext* ctx) {
  Tensor out(x.shape());
  // NaN propagates rather than being clamped to zero.
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] < 0.0 ? 0.0 : x[i];
  record(ctx, OpKind::relu, x);
  return out;
}

Tensor maxpool2d(const Tensor& x, std::size_t window, std::size_t stride, OpContext* ctx) {
  if (window == 0 || stride == 0) throw ArgumentError("maxpool2d: window and stride must be positive");
  const Shape s = x.shape();
  if (s.h < window) throw DimensionError("height", window, s.h, "maxpool2d input smaller than window");
  if (s.w < window) throw DimensionError("width", window, s.w, "maxpool2d input smaller than window");
  const Shape os{s.n, s.c, (s.h - window) / stride + 1, (s.w - window) / stride + 1};
  Tensor out(os);
  std::vector<std::size_t> argmax(ctx ? os.numel() : 0);
  std::size_t k = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (n * s.c + c) * s.plane();
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        for (std::size_t ox = 0; ox < os.w; ++ox, ++k) {
          std::size_t best = base + (oy * stride) * s.w + ox * stride;
          for (std::size_t ky = 0; ky < window; ++ky) {
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::size_t idx = base + (oy * stride + ky) * s.w + ox * stride + kx;
              if (x[idx] > x[best]) best = idx;
            }
          }
          out[k] = x[best];
          if (ctx) argmax[k] = best;
        }
      }
    }
  }
  if (ctx) {
    record(ctx, OpKind::maxpool2d, x);
    ctx->indices = std::move(argmax);
    ctx->window = window;
    ctx->stride = stride;
  }
  return out;
}

Tensor global_avgpool(const Tensor& x, OpContext* ctx) {
  const Shape s = x.shape();
  Tensor out(Shape{s.n, s.c, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (double v : x.plane(n, c)) sum += v;
      out.at(n, c, 0, 0) = sum / static_cast<double>(s.plane());
    }
  }
  record(ctx, OpKind::global_avgpool, x);
  return out;
}

Tensor dense(const Tensor& x, const DenseParams& p, OpContext* ctx) {
  const Shape s = x.shape();
  if (s.sample() != p.in_features()) throw DimensionError("features", p.in_features(), s.sample(), "dense input");
  if (p.bias.size() != p.out_features()) throw DimensionError("bias length", p.out_features(), p.bias.size(), "dense");
  Tensor out(Shape{s.n, p.out_features(), 1, 1});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < p.out_features(); ++o) out.at(n, o, 0, 0) = p.bias[o];
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(s.n), static_cast<int>(p.out_features()),
              static_cast<int>(p.in_features()), 1.0, x.data().data(), static_cast<int>(p.in_features()),
              p.weight.data().data(), static_cast<int>(p.in_features()), 1.0, out.data().data(),
              static_cast<int>(p.out_features()));
  record(ctx, OpKind::dense, x);
  if (ctx) ctx->dense = &p;
  return out;
}

Tensor softmax(const Tensor& x, OpContext* ctx) {
  const Shape s = x.shape();
  Tensor out(s);
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    const std::size_t base = n * s.sample();
    for (std::size_t p = 0; p < plane; ++p) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < s.c; ++c) mx = std::max(mx, x[base + c * plane + p]);
      double sum = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        const double e = std::exp(x[base + c * plane + p] - mx);
        out[base + c * plane + p] = e;
        sum += e;
      }
      for (std::size_t c = 0; c < s.c; ++c) out[base + c * plane + p] /= sum;
    }
  }
  if (ctx) {
    record(ctx, OpKind::softmax, x);
    ctx->output = out;
  }
  return out;
}

Tensor residual_add(const Tensor& a, const Tensor& b, OpContext* ctx) {
  require_shape(a.shape(), b.shape(), "residual_add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  record(ctx, OpKind::residual_add, a);
  return out;
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor, OpContext* ctx) {
  if (factor == 0) throw ArgumentError("upsample_nearest: factor must be positive");
  const Shape s = x.shape();
  Tensor out(Shape{s.n, s.c, s.h * factor, s.w * factor});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h * factor; ++y)
        for (std::size_t xx = 0; xx < s.w * factor; ++xx) out.at(n, c, y, xx) = x.at(n, c, y / factor, xx / factor);
  record(ctx, OpKind::upsample_nearest, x);
  if (ctx) ctx->factor = factor;
  return out;
}

Gradients backward(const OpContext& ctx, const Tensor& grad_output, bool want_input_grad) {
  if (!ctx.recorded) throw StateError("backward: no forward context recorded");
  const Shape in = ctx.input.shape();
  Gradients grads;
  switch (ctx.kind) {
    case OpKind::conv2d:
      if (!ctx.conv) throw StateError("backward: conv2d context lacks parameters");
      return conv_backward(ctx, grad_output, want_input_grad);
    case OpKind::batchnorm:
      if (!ctx.bn) throw StateError("backward: batchnorm context lacks parameters");
      return batchnorm_backward(ctx, grad_output);
    case OpKind::relu:
      require_shape(in, grad_output.shape(), "relu backward");
      grads.input = Tensor(in);
      for (std::size_t i = 0; i < in.numel(); ++i) grads.input[i] = ctx.input[i] > 0.0 ? grad_output[i] : 0.0;
      return grads;
    case OpKind::maxpool2d:
      if (grad_output.numel() != ctx.indices.size())
        throw DimensionError("elements", ctx.indices.size(), grad_output.numel(), "maxpool2d backward");
      grads.input = Tensor(in);
      for (std::size_t k = 0; k < ctx.indices.size(); ++k) grads.input[ctx.indices[k]] += grad_output[k];
      return grads;
    case OpKind::global_avgpool: {
      require_shape(Shape{in.n, in.c, 1, 1}, grad_output.shape(), "global_avgpool backward");
      grads.input = Tensor(in);
      const double inv = 1.0 / static_cast<double>(in.plane());
      for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t c = 0; c < in.c; ++c)
          for (double& v : grads.input.plane(n, c)) v = grad_output.at(n, c, 0, 0) * inv;
      return grads;
    }
    case OpKind::dense: {
      if (!ctx.dense) throw StateError("backward: dense context lacks parameters");
      const DenseParams& p = *ctx.dense;
      require_shape(Shape{in.n, p.out_features(), 1, 1}, grad_output.shape(), "dense backward");
      const auto n = static_cast<int>(in.n);
      const auto o = static_cast<int>(p.out_features());
      const auto i = static_cast<int>(p.in_features());
      grads.weight.assign(p.weight.numel(), 0.0);
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, o, i, n, 1.0, grad_output.data().data(), o,
                  ctx.input.data().data(), i, 0.0, grads.weight.data(), i);
      grads.bias.assign(p.out_features(), 0.0);
      for (std::size_t s = 0; s < in.n; ++s)
        for (std::size_t k = 0; k < p.out_features(); ++k) grads.bias[k] += grad_output.at(s, k, 0, 0);
      if (want_input_grad) {
        grads.input = Tensor(in);
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, i, o, 1.0, grad_output.data().data(), o,
                    p.weight.data().data(), i, 0.0, grads.input.data().data(), i);
      }
      return grads;
    }
    case OpKind::softmax: {
      require_shape(in, grad_output.shape(), "softmax backward");
      grads.input = Tensor(in);
      const std::size_t plane = in.plane();
      for (std::size_t n = 0; n < in.n; ++n) {
        const std::size_t base = n * in.sample();
        for (std::size_t p = 0; p < plane; ++p) {
          double dot = 0.0;
          for (std::size_t c = 0; c < in.c; ++c) dot += ctx.output[base + c * plane + p] * grad_output[base + c * plane + p];
          for (std::size_t c = 0; c < in.c; ++c) {
            const std::size_t k = base + c * plane + p;
            grads.input[k] = ctx.output[k] * (grad_output[k] - dot);
          }
        }
      }
      return grads;
    }
    case OpKind::residual_add:
      require_shape(in, grad_output.shape(), "residual_add backward");
      grads.input = grad_output;
      return grads;
    case OpKind::upsample_nearest: {
      const std::size_t f = ctx.factor;
      require_shape(Shape{in.n, in.c, in.h * f, in.w * f}, grad_output.shape(), "upsample_nearest backward");
      grads.input = Tensor(in);
      for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t c = 0; c < in.c; ++c)
          for (std::size_t y = 0; y < in.h * f; ++y)
            for (std::size_t x = 0; x < in.w * f; ++x) grads.input.at(n, c, y / f, x / f) += grad_output.at(n, c, y, x);
      return grads;
    }
    case OpKind::spatial_dropout: {
      require_shape(in, grad_output.shape(), "dropout backward");
      grads.input = Tensor(in);
      if (ctx.scale.size() == in.numel()) {
        for (std::size_t i = 0; i < in.numel(); ++i) grads.input[i] = grad_output[i] * ctx.scale[i];
        return grads;
      }
      if (ctx.scale.size() != in.n * in.c) throw StateError("backward: dropout context lacks multipliers");
      for (std::size_t n = 0; n < in.n; ++n) {
        for (std::size_t c = 0; c < in.c; ++c) {
          const double m = ctx.scale[n * in.c + c];
          auto src = grad_output.plane(n, c);
          auto dst = grads.input.plane(n, c);
          for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * m;
        }
      }
      return grads;
    }
  }
  throw StateError("backward: unknown op kind");
}

}  // namespace smcdo
