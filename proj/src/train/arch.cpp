#include "train/arch.hpp"

#include <cmath>
#include <random>

namespace smcdo {

namespace {

constexpr std::size_t kSegnetEncoderConvs = 3;

class Builder {
 public:
  Builder(const ArchConfig& arch) : arch_(arch), rng_(arch.init_seed) {}

  void conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
    if (conv_index_ >= arch_.first_stochastic_layer) push(LayerSpec{LayerKind::dropout_site}, {});
    push(LayerSpec{LayerKind::conv}, make_conv(in, out, k, stride, pad));
    ++conv_index_;
  }
  void batchnorm(std::size_t c) {
    BatchNormParams p;
    p.gamma.assign(c, 1.0);
    p.beta.assign(c, 0.0);
    p.running_mean.assign(c, 0.0);
    p.running_var.assign(c, 1.0);
    push(LayerSpec{LayerKind::batchnorm}, p);
  }
  void relu() { push(LayerSpec{LayerKind::relu}, {}); }
  void maxpool(std::size_t window, std::size_t stride) {
    LayerSpec l{LayerKind::maxpool};
    l.window = window;
    l.stride = stride;
    push(l, {});
  }
  void upsample(std::size_t factor) {
    LayerSpec l{LayerKind::upsample};
    l.factor = factor;
    push(l, {});
  }
  void residual_begin() { push(LayerSpec{LayerKind::residual_begin}, {}); }
  void residual_end(std::size_t in, std::size_t out, std::size_t stride) {
    LayerSpec l{LayerKind::residual_end};
    if (in != out || stride != 1) {
      l.projection = true;
      push(l, make_conv(in, out, 1, stride, 0));
    } else {
      push(l, {});
    }
  }
  void global_avgpool() { push(LayerSpec{LayerKind::global_avgpool}, {}); }
  void dense(std::size_t in, std::size_t out) {
    DenseParams p;
    p.weight = Tensor(Shape{out, in, 1, 1});
    std::normal_distribution<double> nd(0.0, std::sqrt(1.0 / static_cast<double>(in)));
    for (double& v : p.weight.data()) v = nd(rng_);
    p.bias.assign(out, 0.0);
    push(LayerSpec{LayerKind::dense}, p);
  }
  void softmax() { push(LayerSpec{LayerKind::softmax}, {}); }

  std::size_t conv_index() const { return conv_index_; }

  ModelGraph finish(const DropoutSpec& dropout) {
    return ModelGraph(std::move(layers_), std::make_shared<WeightStore>(std::move(store_)), dropout);
  }

 private:
  ConvParams make_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
    ConvParams p;
    p.weight = Tensor(Shape{out, in, k, k});
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(in * k * k)));
    for (double& v : p.weight.data()) v = nd(rng_);
    p.bias.assign(out, 0.0);
    p.stride = stride;
    p.padding = pad;
    return p;
  }
  void push(LayerSpec spec, LayerParams params) {
    layers_.push_back(spec);
    store_.params.push_back(std::move(params));
  }

  const ArchConfig& arch_;
  std::mt19937_64 rng_;
  std::vector<LayerSpec> layers_;
  WeightStore store_;
  std::size_t conv_index_ = 0;
};

}  // namespace

const char* to_string(ArchFamily f) noexcept { return f == ArchFamily::mini_wrn ? "mini_wrn" : "mini_segnet"; }

ArchFamily parse_arch_family(const std::string& s) {
  if (s == "mini_wrn") return ArchFamily::mini_wrn;
  if (s == "mini_segnet") return ArchFamily::mini_segnet;
  throw ConfigError("unknown architecture family '" + s + "'");
}

void ArchConfig::validate() const {
  if (widening_factor < 1) throw ConfigError("arch: widening_factor must be >= 1");
  if (base_channels < 1) throw ConfigError("arch: base_channels must be >= 1");
  if (input_channels < 1) throw ConfigError("arch: input_channels must be >= 1");
  if (family == ArchFamily::mini_wrn) {
    if (depth_blocks < 1) throw ConfigError("arch: depth_blocks must be >= 1");
    if (stages < 1) throw ConfigError("arch: stages must be >= 1");
    if (num_classes < 2) throw ConfigError("arch: num_classes must be >= 2");
  } else {
    if (num_classes != 2) throw ConfigError("arch: mini_segnet predicts exactly 2 classes");
    if (first_stochastic_layer < kSegnetEncoderConvs)
      throw ConfigError("arch: mini_segnet dropout must start in the decoder (first_stochastic_layer >= 3)");
  }
}

std::size_t conv_layer_count(const ArchConfig& arch) {
  if (arch.family == ArchFamily::mini_segnet) return kSegnetEncoderConvs + 3;
  return 1 + 2 * arch.stages * arch.depth_blocks;
}

ModelGraph build_mini_wrn(const ArchConfig& arch, const DropoutSpec& dropout) {
  if (arch.family != ArchFamily::mini_wrn) throw ConfigError("build_mini_wrn: family must be mini_wrn");
  arch.validate();
  Builder b(arch);
  b.conv(arch.input_channels, arch.base_channels, 3, 1, 1);
  b.batchnorm(arch.base_channels);
  b.relu();
  b.maxpool(2, 2);
  std::size_t channels = arch.base_channels;
  for (std::size_t s = 0; s < arch.stages; ++s) {
    const std::size_t width = arch.base_channels * arch.widening_factor << s;
    for (std::size_t blk = 0; blk < arch.depth_blocks; ++blk) {
      const std::size_t stride = (s > 0 && blk == 0) ? 2 : 1;
      b.residual_begin();
      b.conv(channels, width, 3, stride, 1);
      b.batchnorm(width);
      b.relu();
      b.conv(width, width, 3, 1, 1);
      b.batchnorm(width);
      b.residual_end(channels, width, stride);
      b.relu();
      channels = width;
    }
  }
  b.global_avgpool();
  b.dense(channels, arch.num_classes);
  b.softmax();
  return b.finish(dropout);
}

ModelGraph build_mini_segnet(const ArchConfig& arch, const DropoutSpec& dropout) {
  if (arch.family != ArchFamily::mini_segnet) throw ConfigError("build_mini_segnet: family must be mini_segnet");
  arch.validate();
  const std::size_t c1 = arch.base_channels * arch.widening_factor;
  const std::size_t c2 = 2 * c1;
  const std::size_t c3 = 4 * c1;
  Builder b(arch);
  b.conv(arch.input_channels, c1, 3, 1, 1);
  b.batchnorm(c1);
  b.relu();
  b.maxpool(2, 2);
  b.conv(c1, c2, 3, 1, 1);
  b.batchnorm(c2);
  b.relu();
  b.maxpool(2, 2);
  b.conv(c2, c3, 3, 1, 1);
  b.batchnorm(c3);
  b.relu();
  b.upsample(2);
  b.conv(c3, c2, 3, 1, 1);
  b.batchnorm(c2);
  b.relu();
  b.upsample(2);
  b.conv(c2, c1, 3, 1, 1);
  b.batchnorm(c1);
  b.relu();
  b.conv(c1, arch.num_classes, 1, 1, 0);
  b.softmax();
  return b.finish(dropout);
}

ModelGraph build_model(const ArchConfig& arch, const DropoutSpec& dropout) {
  return arch.family == ArchFamily::mini_wrn ? build_mini_wrn(arch, dropout) : build_mini_segnet(arch, dropout);
}

}  // namespace smcdo
