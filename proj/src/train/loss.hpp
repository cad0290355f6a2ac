#pragma once

#include <span>

#include "tensor/tensor.hpp"

namespace smcdo {

inline constexpr double kProbFloor = 1e-12;

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d probs
};

/// Mean negative log-likelihood over every (n, y, x) position, with
/// probabilities clamped at kProbFloor. `labels` follows the n, y, x layout
/// of the probability planes.
LossResult cross_entropy_loss(const Tensor& probs, std::span<const int> labels);

/// Soft dice on the foreground channel (class 1) of N x 2 x H x W
/// probabilities: 1 - 2*sum(p*g) / (sum(p) + sum(g)).
LossResult dice_loss(const Tensor& probs, std::span<const int> mask);

}  // namespace smcdo
