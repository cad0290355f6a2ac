#include "graph/executor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace smcdo {

namespace {

struct StochasticPlan {
  bool active = false;
  DropoutSpec spec{};
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> branch_ids;  // one per batch block
  std::size_t block = 1;
};

struct LayerRange {
  std::span<const LayerSpec> layers;
  std::size_t offset = 0;  // global index of layers[0]
  std::size_t split = 0;   // global indices below this count as backbone
};

void count(const ExecOptions& opt, std::size_t global_index, std::size_t split, std::size_t replicas) {
  if (!opt.counters) return;
  opt.counters->layer_executions += replicas;
  if (global_index < split)
    opt.counters->backbone_executions += replicas;
  else
    opt.counters->branch_executions += replicas;
}

void run_layers(const LayerRange& range, const WeightStore& w, BackboneCache& st, const StochasticPlan& plan,
                const ExecOptions& opt) {
  std::vector<ChannelMask> pending;  // masks of a dropout site awaiting fusion into the next conv
  const std::size_t replicas = plan.active ? plan.branch_ids.size() : 1;
  for (std::size_t i = 0; i < range.layers.size(); ++i) {
    const LayerSpec& l = range.layers[i];
    const std::size_t idx = range.offset + i;
    Tensor& act = st.activation;
    try {
      switch (l.kind) {
        case LayerKind::conv: {
          const ConvParams& p = w.conv(idx);
          if (!pending.empty()) {
            if (opt.counters)
              for (const auto& m : pending) {
                Shape s = act.shape();
                s.n = plan.block;
                opt.counters->conv_macs += flop_count(p, s, m);
              }
            act = fused_dropout_conv(act, p, pending, plan.block, plan.spec.rate_inf);
            pending.clear();
          } else {
            if (opt.counters) opt.counters->conv_macs += flop_count(p, act.shape());
            act = conv2d(act, p);
          }
          break;
        }
        case LayerKind::batchnorm: act = batchnorm_inference(act, w.batchnorm(idx)); break;
        case LayerKind::relu: act = relu(act); break;
        case LayerKind::maxpool: act = maxpool2d(act, l.window, l.stride); break;
        case LayerKind::global_avgpool: act = global_avgpool(act); break;
        case LayerKind::dense: act = dense(act, w.dense(idx)); break;
        case LayerKind::softmax: act = softmax(act); break;
        case LayerKind::upsample: act = upsample_nearest(act, l.factor); break;
        case LayerKind::residual_begin: st.skips.push_back(act); break;
        case LayerKind::residual_end: {
          if (st.skips.empty()) throw StateError("residual_end without a cached skip tensor");
          Tensor skip = std::move(st.skips.back());
          st.skips.pop_back();
          if (l.projection) {
            const ConvParams& p = w.conv(idx);
            if (opt.counters) opt.counters->conv_macs += flop_count(p, skip.shape());
            skip = conv2d(skip, p);
          }
          act = residual_add(act, skip);
          break;
        }
        case LayerKind::dropout_site: {
          if (!plan.active) break;
          const double rate = plan.spec.rate_inf;
          const std::size_t channels = act.shape().c;
          if (plan.spec.mode == DropoutMode::spatial) {
            std::vector<ChannelMask> masks;
            masks.reserve(plan.branch_ids.size());
            for (auto b : plan.branch_ids) masks.push_back(sample_spatial_mask(channels, rate, {plan.seed, b, idx}));
            const bool next_is_conv = i + 1 < range.layers.size() && range.layers[i + 1].kind == LayerKind::conv;
            if (opt.fused && next_is_conv)
              pending = std::move(masks);
            else
              act = apply_spatial_dropout(act, masks, plan.block, rate);
          } else {
            std::vector<Tensor> parts;
            for (std::size_t b = 0; b < plan.branch_ids.size(); ++b)
              parts.push_back(apply_element_dropout(act.slice_batch(b * plan.block, plan.block), rate,
                                                    {plan.seed, plan.branch_ids[b], idx}));
            act = concat_batch(parts);
          }
          break;
        }
      }
    } catch (const DimensionError& e) {
      throw e.prefixed("layer " + std::to_string(idx) + " (" + to_string(l.kind) + "): ");
    }
    count(opt, idx, range.split, replicas);
  }
}

std::vector<std::uint64_t> iota_ids(std::size_t m) {
  std::vector<std::uint64_t> ids(m);
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  return ids;
}

}  // namespace

EnsembleOutput aggregate(std::vector<Tensor> per_sample_probs) {
  if (per_sample_probs.empty()) throw ArgumentError("aggregate: no probability tensors");
  const Shape s = per_sample_probs.front().shape();
  for (const auto& p : per_sample_probs) require_shape(s, p.shape(), "aggregate");
  const std::size_t m = per_sample_probs.size();
  EnsembleOutput out;
  out.mean_probs = Tensor(s);
  for (const auto& p : per_sample_probs)
    for (std::size_t i = 0; i < p.numel(); ++i) out.mean_probs[i] += p[i];
  for (std::size_t i = 0; i < s.numel(); ++i) out.mean_probs[i] /= static_cast<double>(m);

  out.per_class_variance = Tensor(s);
  if (m > 1) {
    // Shifted by the first sample so identical samples give exactly zero.
    const Tensor& ref = per_sample_probs.front();
    const double md = static_cast<double>(m);
    for (std::size_t i = 0; i < s.numel(); ++i) {
      double sum = 0.0, sum_sq = 0.0;
      for (const auto& p : per_sample_probs) {
        const double d = p[i] - ref[i];
        sum += d;
        sum_sq += d * d;
      }
      out.per_class_variance[i] = std::max(0.0, (sum_sq - sum * sum / md) / (md - 1.0));
    }
  }

  out.predictive_entropy = Tensor(Shape{s.n, 1, s.h, s.w});
  const double max_entropy = std::log(static_cast<double>(s.c));
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) {
        double h = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) {
          const double p = out.mean_probs.at(n, c, y, x);
          if (p > 0.0) h -= p * std::log(p);
        }
        out.predictive_entropy.at(n, 0, y, x) = std::clamp(h, 0.0, max_entropy);
      }
    }
  }
  out.per_sample_probs = std::move(per_sample_probs);
  return out;
}

Tensor run_vanilla(const ModelGraph& graph, const Tensor& input, const ExecOptions& options) {
  BackboneCache st{input, {}};
  const std::size_t split = graph.first_stochastic_index().value_or(graph.size());
  run_layers({graph.layers(), 0, split}, graph.weights(), st, StochasticPlan{}, options);
  return std::move(st.activation);
}

EnsembleOutput run_mcdo(const ModelGraph& graph, const Tensor& input, std::size_t num_samples, std::uint64_t seed,
                        const ExecOptions& options) {
  if (num_samples == 0) throw ArgumentError("run_mcdo: at least one sample required");
  const std::size_t split = graph.first_stochastic_index().value_or(graph.size());
  std::vector<Tensor> probs;
  probs.reserve(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) {
    StochasticPlan plan{true, graph.dropout(), seed, {i}, input.shape().n};
    BackboneCache st{input, {}};
    run_layers({graph.layers(), 0, split}, graph.weights(), st, plan, options);
    probs.push_back(std::move(st.activation));
  }
  return aggregate(std::move(probs));
}

BackboneCache run_backbone(const BranchedModel& model, const Tensor& input, const ExecOptions& options) {
  BackboneCache st{input, {}};
  run_layers({model.backbone(), 0, model.split_index()}, model.weights(), st, StochasticPlan{}, options);
  return st;
}

Tensor run_branches(const BranchedModel& model, const BackboneCache& cache, std::uint64_t seed,
                    const ExecOptions& options) {
  const std::size_t m = model.num_branches();
  BackboneCache st{repeat_batch(cache.activation, m), {}};
  st.skips.reserve(cache.skips.size());
  for (const auto& s : cache.skips) st.skips.push_back(repeat_batch(s, m));
  StochasticPlan plan{true, model.dropout(), seed, iota_ids(m), cache.activation.shape().n};
  run_layers({model.branch_template(), model.split_index(), model.split_index()}, model.weights(), st, plan, options);
  return std::move(st.activation);
}

EnsembleOutput run_branched(const BranchedModel& model, const Tensor& input, std::uint64_t seed,
                            const ExecOptions& options) {
  const BackboneCache cache = run_backbone(model, input, options);
  const Tensor stacked = run_branches(model, cache, seed, options);
  const std::size_t n = input.shape().n;
  std::vector<Tensor> probs;
  probs.reserve(model.num_branches());
  for (std::size_t b = 0; b < model.num_branches(); ++b) probs.push_back(stacked.slice_batch(b * n, n));
  return aggregate(std::move(probs));
}

EnsembleOutput run_deep_ensemble(std::span<const ModelGraph> members, const Tensor& input,
                                 const ExecOptions& options) {
  if (members.empty()) throw ArgumentError("run_deep_ensemble: no members");
  for (std::size_t i = 1; i < members.size(); ++i)
    if (!members[i].same_architecture(members.front()))
      throw ArgumentError("run_deep_ensemble: member " + std::to_string(i) + " architecture differs from member 0");
  std::vector<Tensor> probs;
  probs.reserve(members.size());
  for (const auto& g : members) probs.push_back(run_vanilla(g, input, options));
  return aggregate(std::move(probs));
}

std::uint64_t graph_conv_macs(const ModelGraph& graph, const Shape& input) {
  std::uint64_t total = 0;
  Shape s = input;
  std::vector<Shape> skips;
  const auto& layers = graph.layers();
  const auto& w = graph.weights();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::conv:
        total += flop_count(w.conv(i), s);
        s = w.conv(i).output_shape(s);
        break;
      case LayerKind::maxpool: s = Shape{s.n, s.c, (s.h - l.window) / l.stride + 1, (s.w - l.window) / l.stride + 1}; break;
      case LayerKind::global_avgpool: s = Shape{s.n, s.c, 1, 1}; break;
      case LayerKind::dense: s = Shape{s.n, w.dense(i).out_features(), 1, 1}; break;
      case LayerKind::upsample: s = Shape{s.n, s.c, s.h * l.factor, s.w * l.factor}; break;
      case LayerKind::residual_begin: skips.push_back(s); break;
      case LayerKind::residual_end:
        if (l.projection) total += flop_count(w.conv(i), skips.back());
        skips.pop_back();
        break;
      default: break;
    }
  }
  return total;
}

}  // namespace smcdo
