#include "graph/model_graph.hpp"

#include <cmath>

namespace smcdo {

namespace {

template <typename T>
T& param_as(std::vector<LayerParams>& params, std::size_t layer, const char* what) {
  if (layer >= params.size()) throw StateError(std::string("weight store has no layer ") + std::to_string(layer));
  if (auto* p = std::get_if<T>(&params[layer])) return *p;
  throw StateError("layer " + std::to_string(layer) + " holds no " + what + " parameters");
}

template <typename T>
const T& param_as(const std::vector<LayerParams>& params, std::size_t layer, const char* what) {
  return param_as<T>(const_cast<std::vector<LayerParams>&>(params), layer, what);
}

std::string where(std::size_t i, LayerKind kind) { return "layer " + std::to_string(i) + " (" + to_string(kind) + ")"; }

}  // namespace

const char* to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::global_avgpool: return "global_avgpool";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
    case LayerKind::residual_begin: return "residual_begin";
    case LayerKind::residual_end: return "residual_end";
    case LayerKind::dropout_site: return "dropout_site";
    case LayerKind::upsample: return "upsample";
  }
  return "unknown";
}

ConvParams& WeightStore::conv(std::size_t layer) { return param_as<ConvParams>(params, layer, "conv"); }
const ConvParams& WeightStore::conv(std::size_t layer) const { return param_as<ConvParams>(params, layer, "conv"); }
BatchNormParams& WeightStore::batchnorm(std::size_t layer) {
  return param_as<BatchNormParams>(params, layer, "batchnorm");
}
const BatchNormParams& WeightStore::batchnorm(std::size_t layer) const {
  return param_as<BatchNormParams>(params, layer, "batchnorm");
}
DenseParams& WeightStore::dense(std::size_t layer) { return param_as<DenseParams>(params, layer, "dense"); }
const DenseParams& WeightStore::dense(std::size_t layer) const {
  return param_as<DenseParams>(params, layer, "dense");
}

std::size_t WeightStore::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params) {
    if (const auto* c = std::get_if<ConvParams>(&p)) total += c->weight.numel() + c->bias.size();
    if (const auto* b = std::get_if<BatchNormParams>(&p)) total += 2 * b->channels();
    if (const auto* d = std::get_if<DenseParams>(&p)) total += d->weight.numel() + d->bias.size();
  }
  return total;
}

ModelGraph::ModelGraph(std::vector<LayerSpec> layers, std::shared_ptr<WeightStore> weights, DropoutSpec dropout)
    : layers_(std::move(layers)), weights_(std::move(weights)), dropout_(dropout) {
  if (!weights_) throw ArgumentError("model graph requires a weight store");
  dropout_.validate();
  validate();
}

void ModelGraph::set_dropout(const DropoutSpec& spec) {
  spec.validate();
  dropout_ = spec;
}

void ModelGraph::set_inference_rate(double rate) {
  validate_rate(rate);
  dropout_.rate_inf = rate;
}

std::optional<std::size_t> ModelGraph::first_stochastic_index() const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].kind == LayerKind::dropout_site) return i;
  return std::nullopt;
}

std::size_t ModelGraph::dropout_site_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.kind == LayerKind::dropout_site ? 1 : 0;
  return n;
}

void ModelGraph::validate() const {
  if (layers_.empty()) throw ArgumentError("model graph has no layers");
  if (weights_->params.size() != layers_.size())
    throw DimensionError("parameter slots", layers_.size(), weights_->params.size(), "model graph weight store");
  if (layers_.back().kind != LayerKind::softmax) throw ArgumentError("model graph must end in softmax");
  std::size_t depth = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const LayerParams& p = weights_->params[i];
    const bool has_conv = std::holds_alternative<ConvParams>(p);
    switch (l.kind) {
      case LayerKind::conv:
        if (!has_conv) throw ArgumentError(where(i, l.kind) + " lacks conv parameters");
        std::get<ConvParams>(p).validate();
        break;
      case LayerKind::batchnorm:
        if (!std::holds_alternative<BatchNormParams>(p))
          throw ArgumentError(where(i, l.kind) + " lacks batchnorm parameters");
        std::get<BatchNormParams>(p).validate();
        break;
      case LayerKind::dense:
        if (!std::holds_alternative<DenseParams>(p)) throw ArgumentError(where(i, l.kind) + " lacks dense parameters");
        break;
      case LayerKind::residual_begin:
        ++depth;
        break;
      case LayerKind::residual_end:
        if (depth == 0) throw ArgumentError(where(i, l.kind) + " has no matching residual_begin");
        --depth;
        if (l.projection != has_conv) throw ArgumentError(where(i, l.kind) + " projection parameters mismatch");
        break;
      case LayerKind::dropout_site:
        if (i + 1 >= layers_.size() || layers_[i + 1].kind != LayerKind::conv)
          throw ArgumentError(where(i, l.kind) + " must directly precede a conv layer");
        break;
      case LayerKind::maxpool:
        if (l.window == 0 || l.stride == 0) throw ArgumentError(where(i, l.kind) + " needs window and stride");
        break;
      case LayerKind::upsample:
        if (l.factor == 0) throw ArgumentError(where(i, l.kind) + " needs a factor");
        break;
      default:
        break;
    }
    if (l.kind != LayerKind::conv && l.kind != LayerKind::batchnorm && l.kind != LayerKind::dense &&
        l.kind != LayerKind::residual_end && !std::holds_alternative<std::monostate>(p))
      throw ArgumentError(where(i, l.kind) + " carries unexpected parameters");
  }
  if (depth != 0) throw ArgumentError("model graph has unterminated residual_begin");
}

ModelGraph ModelGraph::clone() const {
  return ModelGraph(layers_, std::make_shared<WeightStore>(*weights_), dropout_);
}

bool ModelGraph::same_architecture(const ModelGraph& other) const {
  if (layers_ != other.layers_) return false;
  const auto& a = weights_->params;
  const auto& b = other.weights_->params;
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].index() != b[i].index()) return false;
    if (const auto* c = std::get_if<ConvParams>(&a[i])) {
      const auto& d = std::get<ConvParams>(b[i]);
      if (!(c->weight.shape() == d.weight.shape()) || c->stride != d.stride || c->padding != d.padding) return false;
    }
    if (const auto* c = std::get_if<DenseParams>(&a[i]))
      if (!(c->weight.shape() == std::get<DenseParams>(b[i]).weight.shape())) return false;
    if (const auto* c = std::get_if<BatchNormParams>(&a[i]))
      if (c->channels() != std::get<BatchNormParams>(b[i]).channels()) return false;
  }
  return true;
}

Shape ModelGraph::output_shape(const Shape& input) const {
  Shape s = input;
  std::vector<Shape> skips;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    try {
      switch (l.kind) {
        case LayerKind::conv: s = weights_->conv(i).output_shape(s); break;
        case LayerKind::batchnorm:
          if (s.c != weights_->batchnorm(i).channels())
            throw DimensionError("channels", weights_->batchnorm(i).channels(), s.c, "batchnorm");
          break;
        case LayerKind::maxpool:
          if (s.h < l.window || s.w < l.window) throw DimensionError("height", l.window, s.h, "maxpool");
          s = Shape{s.n, s.c, (s.h - l.window) / l.stride + 1, (s.w - l.window) / l.stride + 1};
          break;
        case LayerKind::global_avgpool: s = Shape{s.n, s.c, 1, 1}; break;
        case LayerKind::dense: {
          const auto& d = weights_->dense(i);
          if (s.sample() != d.in_features()) throw DimensionError("features", d.in_features(), s.sample(), "dense");
          s = Shape{s.n, d.out_features(), 1, 1};
          break;
        }
        case LayerKind::upsample: s = Shape{s.n, s.c, s.h * l.factor, s.w * l.factor}; break;
        case LayerKind::residual_begin: skips.push_back(s); break;
        case LayerKind::residual_end: {
          Shape skip = skips.back();
          skips.pop_back();
          if (l.projection) skip = weights_->conv(i).output_shape(skip);
          require_shape(s, skip, "residual_end");
          break;
        }
        default: break;
      }
    } catch (const DimensionError& e) {
      throw e.prefixed(where(i, l.kind) + ": ");
    }
  }
  return s;
}

BranchedModel::BranchedModel(std::vector<LayerSpec> backbone, std::vector<LayerSpec> branch, std::size_t num_branches,
                             std::shared_ptr<WeightStore> weights, DropoutSpec dropout)
    : backbone_(std::move(backbone)),
      branch_(std::move(branch)),
      num_branches_(num_branches),
      weights_(std::move(weights)),
      dropout_(dropout) {
  if (num_branches_ == 0) throw ArgumentError("branched model needs at least one branch");
  for (const auto& l : backbone_)
    if (l.kind == LayerKind::dropout_site) throw ArgumentError("branched model backbone contains a dropout site");
}

void BranchedModel::set_num_branches(std::size_t m) {
  if (m == 0) throw ArgumentError("branched model needs at least one branch");
  num_branches_ = m;
}

ModelGraph BranchedModel::flatten() const {
  std::vector<LayerSpec> layers = backbone_;
  layers.insert(layers.end(), branch_.begin(), branch_.end());
  return ModelGraph(std::move(layers), weights_, dropout_);
}

BranchedModel split_at(const ModelGraph& graph, std::size_t num_branches) {
  const auto split = graph.first_stochastic_index();
  if (!split) throw StateError("split_at: graph has no dropout site");
  const auto& layers = graph.layers();
  std::vector<LayerSpec> backbone(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(*split));
  std::vector<LayerSpec> branch(layers.begin() + static_cast<std::ptrdiff_t>(*split), layers.end());
  return BranchedModel(std::move(backbone), std::move(branch), num_branches, graph.shared_weights(), graph.dropout());
}

}  // namespace smcdo
