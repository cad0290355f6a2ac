#include "train/loss.hpp"

#include <cmath>
#include <string>

namespace smcdo {

namespace {

void check_labels(const Shape& s, std::span<const int> labels, const char* where) {
  if (labels.size() != s.n * s.plane()) throw DimensionError("labels", s.n * s.plane(), labels.size(), where);
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= s.c)
      throw ArgumentError(std::string(where) + ": label " + std::to_string(l) + " out of range [0, " +
                          std::to_string(s.c) + ")");
}

}  // namespace

LossResult cross_entropy_loss(const Tensor& probs, std::span<const int> labels) {
  const Shape s = probs.shape();
  check_labels(s, labels, "cross_entropy_loss");
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(labels.size());
  LossResult r;
  r.grad = Tensor(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const auto label = static_cast<std::size_t>(labels[n * plane + p]);
      const std::size_t k = n * s.sample() + label * plane + p;
      const double prob = probs[k];
      if (prob > kProbFloor) {
        r.value -= std::log(prob);
        r.grad[k] = -1.0 / (count * prob);
      } else {
        r.value -= std::log(kProbFloor);
      }
    }
  }
  r.value /= count;
  return r;
}

LossResult dice_loss(const Tensor& probs, std::span<const int> mask) {
  const Shape s = probs.shape();
  if (s.c != 2) throw DimensionError("channels", 2, s.c, "dice_loss");
  check_labels(s, mask, "dice_loss");
  const std::size_t plane = s.plane();
  double inter = 0.0, total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const double prob = probs[n * s.sample() + plane + p];
      const double g = mask[n * plane + p];
      inter += prob * g;
      total += prob + g;
    }
  }
  LossResult r;
  r.grad = Tensor(s);
  if (total <= 0.0) return r;
  r.value = 1.0 - 2.0 * inter / total;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const double g = mask[n * plane + p];
      r.grad[n * s.sample() + plane + p] = -(2.0 * g * total - 2.0 * inter) / (total * total);
    }
  }
  return r;
}

}  // namespace smcdo
