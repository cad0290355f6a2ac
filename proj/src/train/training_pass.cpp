#include "train/training_pass.hpp"

namespace smcdo {

Tensor TrainingPass::forward(const Tensor& input, std::uint64_t step_seed) {
  const auto& layers = graph_.layers();
  WeightStore& w = graph_.weights();
  const DropoutSpec& dropout = graph_.dropout();
  ctx_.assign(layers.size(), OpContext{});
  projection_ctx_.assign(layers.size(), OpContext{});
  Tensor act = input;
  std::vector<Tensor> skips;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    OpContext* ctx = &ctx_[i];
    try {
      switch (l.kind) {
        case LayerKind::conv: act = conv2d(act, w.conv(i), ctx); break;
        case LayerKind::batchnorm: act = batchnorm_train(act, w.batchnorm(i), ctx); break;
        case LayerKind::relu: act = relu(act, ctx); break;
        case LayerKind::maxpool: act = maxpool2d(act, l.window, l.stride, ctx); break;
        case LayerKind::global_avgpool: act = global_avgpool(act, ctx); break;
        case LayerKind::dense: act = dense(act, w.dense(i), ctx); break;
        case LayerKind::softmax: act = softmax(act, ctx); break;
        case LayerKind::upsample: act = upsample_nearest(act, l.factor, ctx); break;
        case LayerKind::residual_begin: skips.push_back(act); break;
        case LayerKind::residual_end: {
          Tensor skip = std::move(skips.back());
          skips.pop_back();
          if (l.projection) skip = conv2d(skip, w.conv(i), &projection_ctx_[i]);
          act = residual_add(act, skip);
          break;
        }
        case LayerKind::dropout_site: {
          const double rate = dropout.rate_train;
          if (rate <= 0.0) break;
          if (dropout.mode == DropoutMode::spatial) {
            const std::size_t n = act.shape().n;
            std::vector<ChannelMask> masks;
            masks.reserve(n);
            for (std::size_t s = 0; s < n; ++s) masks.push_back(sample_spatial_mask(act.shape().c, rate, {step_seed, s, i}));
            act = apply_spatial_dropout(act, masks, 1, rate, ctx);
          } else {
            act = apply_element_dropout(act, rate, {step_seed, 0, i}, ctx);
          }
          break;
        }
      }
    } catch (const DimensionError& e) {
      throw e.prefixed("layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ");
    }
  }
  return act;
}

GradStore TrainingPass::backward(const Tensor& grad_probs) {
  const auto& layers = graph_.layers();
  if (ctx_.size() != layers.size()) throw StateError("TrainingPass::backward called before forward");
  GradStore grads(layers.size());
  Tensor g = grad_probs;
  std::vector<Tensor> skip_grads;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const LayerSpec& l = layers[k];
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::batchnorm:
      case LayerKind::dense: {
        Gradients r = smcdo::backward(ctx_[k], g, k > 0 || want_input_grad_);
        grads[k].weight = std::move(r.weight);
        grads[k].bias = std::move(r.bias);
        g = std::move(r.input);
        break;
      }
      case LayerKind::residual_begin: {
        const Tensor gs = std::move(skip_grads.back());
        skip_grads.pop_back();
        g = residual_add(g, gs);
        break;
      }
      case LayerKind::residual_end: {
        Tensor gs = g;
        if (l.projection) {
          Gradients r = smcdo::backward(projection_ctx_[k], gs);
          grads[k].weight = std::move(r.weight);
          grads[k].bias = std::move(r.bias);
          gs = std::move(r.input);
        }
        skip_grads.push_back(std::move(gs));
        break;
      }
      case LayerKind::dropout_site:
        if (ctx_[k].recorded) g = smcdo::backward(ctx_[k], g).input;
        break;
      default:
        g = smcdo::backward(ctx_[k], g).input;
        break;
    }
  }
  input_grad_ = std::move(g);
  return grads;
}

}  // namespace smcdo
