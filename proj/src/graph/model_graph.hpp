#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "stochastic/dropout.hpp"
#include "tensor/ops.hpp"

namespace smcdo {

// Tag values are part of the weight file format; do not renumber.
enum class LayerKind : std::uint32_t {
  conv = 1,
  batchnorm = 2,
  relu = 3,
  maxpool = 4,
  global_avgpool = 5,
  dense = 6,
  softmax = 7,
  residual_begin = 8,
  residual_end = 9,
  dropout_site = 10,
  upsample = 11,
};

const char* to_string(LayerKind kind) noexcept;

/// Structural description of one layer. Parameters live in the WeightStore.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t window = 0;   // maxpool
  std::size_t stride = 0;   // maxpool
  std::size_t factor = 0;   // upsample
  bool projection = false;  // residual_end: skip path goes through a conv

  bool operator==(const LayerSpec&) const = default;
};

using LayerParams = std::variant<std::monostate, ConvParams, BatchNormParams, DenseParams>;

/// Parameters indexed by layer position. A residual_end with projection holds
/// the projection ConvParams.
struct WeightStore {
  std::vector<LayerParams> params;

  ConvParams& conv(std::size_t layer);
  const ConvParams& conv(std::size_t layer) const;
  BatchNormParams& batchnorm(std::size_t layer);
  const BatchNormParams& batchnorm(std::size_t layer) const;
  DenseParams& dense(std::size_t layer);
  const DenseParams& dense(std::size_t layer) const;

  std::size_t parameter_count() const;
  bool operator==(const WeightStore&) const = default;
};

/// Ordered layer list with residual markers and dropout sites over a shared
/// parameter store.
class ModelGraph {
 public:
  ModelGraph() = default;
  ModelGraph(std::vector<LayerSpec> layers, std::shared_ptr<WeightStore> weights, DropoutSpec dropout);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t size() const noexcept { return layers_.size(); }

  WeightStore& weights() { return *weights_; }
  const WeightStore& weights() const { return *weights_; }
  const std::shared_ptr<WeightStore>& shared_weights() const noexcept { return weights_; }

  const DropoutSpec& dropout() const noexcept { return dropout_; }
  void set_dropout(const DropoutSpec& spec);
  void set_inference_rate(double rate);

  /// Index of the earliest dropout site, if any.
  std::optional<std::size_t> first_stochastic_index() const;
  std::size_t dropout_site_count() const;

  /// Checks every structural invariant: parameters match layer kinds, each
  /// dropout site directly precedes a conv, residual markers nest, and the
  /// graph ends in softmax.
  void validate() const;

  /// Independent deep copy (its own weight store).
  ModelGraph clone() const;

  /// Same architecture and parameter shapes.
  bool same_architecture(const ModelGraph& other) const;

  /// Output extents for a given input, by shape propagation only.
  Shape output_shape(const Shape& input) const;

 private:
  std::vector<LayerSpec> layers_;
  std::shared_ptr<WeightStore> weights_ = std::make_shared<WeightStore>();
  DropoutSpec dropout_{};
};

/// Deterministic backbone prefix plus a stochastic suffix replicated over M
/// weight-sharing branches.
class BranchedModel {
 public:
  BranchedModel(std::vector<LayerSpec> backbone, std::vector<LayerSpec> branch, std::size_t num_branches,
                std::shared_ptr<WeightStore> weights, DropoutSpec dropout);

  const std::vector<LayerSpec>& backbone() const noexcept { return backbone_; }
  const std::vector<LayerSpec>& branch_template() const noexcept { return branch_; }
  std::size_t split_index() const noexcept { return backbone_.size(); }
  std::size_t num_branches() const noexcept { return num_branches_; }
  void set_num_branches(std::size_t m);

  WeightStore& weights() { return *weights_; }
  const WeightStore& weights() const { return *weights_; }
  const std::shared_ptr<WeightStore>& shared_weights() const noexcept { return weights_; }
  const DropoutSpec& dropout() const noexcept { return dropout_; }

  /// Backbone followed by the branch template, over the same weight store.
  ModelGraph flatten() const;

 private:
  std::vector<LayerSpec> backbone_;
  std::vector<LayerSpec> branch_;
  std::size_t num_branches_;
  std::shared_ptr<WeightStore> weights_;
  DropoutSpec dropout_;
};

/// Splits at the first dropout site. Throws StateError when the graph has no
/// dropout site.
BranchedModel split_at(const ModelGraph& graph, std::size_t num_branches = 1);

}  // namespace smcdo
