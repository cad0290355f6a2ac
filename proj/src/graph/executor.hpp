#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "graph/model_graph.hpp"

namespace smcdo {

/// Per-sample probabilities of an MC or ensemble run plus their summaries.
struct EnsembleOutput {
  std::vector<Tensor> per_sample_probs;
  Tensor mean_probs;
  Tensor predictive_entropy;  // N x 1 x H x W, entropy of mean_probs
  Tensor per_class_variance;  // unbiased across samples, zero for a single sample
};

/// Mean of the probability tensors, entropy of that mean, and per-class
/// sample variance.
EnsembleOutput aggregate(std::vector<Tensor> per_sample_probs);

/// Layer-execution accounting. A layer applied to M stacked replicas counts M
/// times.
struct ExecCounters {
  std::size_t layer_executions = 0;
  std::size_t backbone_executions = 0;
  std::size_t branch_executions = 0;
  std::uint64_t conv_macs = 0;
};

struct ExecOptions {
  // Merge each dropout site with the conv that follows it into one
  // reduced-channel convolution (spatial mode only).
  bool fused = false;
  ExecCounters* counters = nullptr;
};

/// Activation handed from the backbone to the branches, including skip
/// tensors of residual blocks that straddle the split.
struct BackboneCache {
  Tensor activation;
  std::vector<Tensor> skips;
};

/// Single deterministic pass; dropout sites are identity.
Tensor run_vanilla(const ModelGraph& graph, const Tensor& input, const ExecOptions& options = {});

/// M full stochastic passes at the inference rate. Sample i draws the mask of
/// dropout site L from MaskSeed{seed, i, L}.
EnsembleOutput run_mcdo(const ModelGraph& graph, const Tensor& input, std::size_t num_samples, std::uint64_t seed,
                        const ExecOptions& options = {});

/// Backbone once, then all branches as one pass over M stacked replicas of the
/// cached activation. Masks match run_mcdo sample for sample.
EnsembleOutput run_branched(const BranchedModel& model, const Tensor& input, std::uint64_t seed,
                            const ExecOptions& options = {});

BackboneCache run_backbone(const BranchedModel& model, const Tensor& input, const ExecOptions& options = {});

/// Stochastic suffix over M stacked replicas of `cache`; returns the stacked
/// probabilities (M*N samples, replica-major).
Tensor run_branches(const BranchedModel& model, const BackboneCache& cache, std::uint64_t seed,
                    const ExecOptions& options = {});

/// Mean over independently trained members with identical architecture.
EnsembleOutput run_deep_ensemble(std::span<const ModelGraph> members, const Tensor& input,
                                 const ExecOptions& options = {});

/// Multiply-add count of all convolutions (including residual projections)
/// for one vanilla pass over `input`.
std::uint64_t graph_conv_macs(const ModelGraph& graph, const Shape& input);

}  // namespace smcdo
