#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tensor/tensor.hpp"

namespace smcdo {

inline constexpr std::size_t kDefaultBins = 15;
inline constexpr double kNllFloor = 1e-12;

/// Bin b covers (b/B, (b+1)/B]; confidences at or below 1/B land in bin 0.
std::size_t ece_bin(double confidence, std::size_t bins);

/// Per-bin sample count, summed confidence and number correct.
struct CalibrationBins {
  explicit CalibrationBins(std::size_t bins = kDefaultBins);

  void add(double confidence, bool correct);
  std::size_t num_bins() const noexcept { return count.size(); }
  std::uint64_t total() const noexcept;
  /// Sum over bins of (n_b / N) * |acc_b - conf_b|.
  double ece() const;

  std::vector<std::uint64_t> count;
  std::vector<double> confidence_sum;
  std::vector<std::uint64_t> correct;
};

// Probabilities are N x K x H x W with one label per (n, h, w) position,
// laid out n, y, x. Classification uses H = W = 1.

/// Top-label confidence binned over every position.
CalibrationBins calibration_bins(const Tensor& probs, std::span<const int> labels, std::size_t bins = kDefaultBins);
double ece(const Tensor& probs, std::span<const int> labels, std::size_t bins = kDefaultBins);

/// Every pixel is one sample, pooled over the whole batch.
double pixelwise_ece(const Tensor& probs, std::span<const int> labels, std::size_t bins = kDefaultBins);

/// Arg-max class at each position; ties pick the lowest class index.
std::vector<int> predictions(const Tensor& probs);
double accuracy(const Tensor& probs, std::span<const int> labels);
/// Mean of -log p[label] with p clamped to at least 1e-12.
double nll(const Tensor& probs, std::span<const int> labels);

/// 2|A and B| / (|A| + |B|) for binary masks; two empty masks score 1.
double dice(std::span<const int> pred, std::span<const int> truth);
/// Mean over images of the dice between the arg-max mask and the true mask.
double mean_dice(const Tensor& probs, std::span<const int> labels);

double mean_value(const Tensor& t);

}  // namespace smcdo
