#pragma once

#include <cstdint>
#include <vector>

#include "graph/model_graph.hpp"

namespace smcdo {

/// Gradient buffers laid out like WeightStore: for conv, dense and projected
/// residual_end layers `weight`/`bias` follow the parameter tensors; for
/// batch-norm they hold d/dgamma and d/dbeta. Other layers stay empty.
struct LayerGrad {
  std::vector<double> weight;
  std::vector<double> bias;
};

using GradStore = std::vector<LayerGrad>;

/// One training step's forward and backward pass over a whole graph.
/// Forward uses batch statistics (updating the running ones) and applies
/// dropout at the train-time rate with an independent mask per sample drawn
/// from MaskSeed{step_seed, sample, layer}.
class TrainingPass {
 public:
  explicit TrainingPass(ModelGraph& graph) : graph_(graph) {}

  Tensor forward(const Tensor& input, std::uint64_t step_seed);

  /// Gradients of the loss w.r.t. every parameter, given d loss / d probs.
  GradStore backward(const Tensor& grad_probs);

  /// Gradient w.r.t. the input of the last forward().
  const Tensor& input_grad() const noexcept { return input_grad_; }

  void set_want_input_grad(bool v) noexcept { want_input_grad_ = v; }

 private:
  ModelGraph& graph_;
  std::vector<OpContext> ctx_;
  std::vector<OpContext> projection_ctx_;
  Tensor input_grad_;
  bool want_input_grad_ = false;
};

}  // namespace smcdo
