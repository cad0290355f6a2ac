#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tensor/tensor.hpp"

namespace smcdo {

enum class Task { classification, segmentation };

/// Images in [0,1] (or normalized) plus integer targets. Classification keeps
/// one label per image; segmentation keeps one label per pixel, laid out
/// n, y, x.
struct Dataset {
  Task task = Task::classification;
  Tensor images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return images.shape().n; }
  std::size_t labels_per_image() const noexcept {
    return task == Task::classification ? 1 : images.shape().plane();
  }
  void validate(std::size_t num_classes) const;
};

Dataset subset(const Dataset& d, std::span<const std::size_t> indices);

/// Labels of one image as an N=1 x 1 x H x W tensor of 0/1 values.
Tensor mask_tensor(const Dataset& d, std::size_t index);

struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const noexcept { return mean.empty(); }
  bool operator==(const Normalization&) const = default;
};

/// Per-channel mean and standard deviation over every pixel of `images`.
Normalization channel_statistics(const Tensor& images);
Tensor normalize(const Tensor& images, const Normalization& norm);

}  // namespace smcdo
