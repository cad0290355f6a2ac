#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tensor/error.hpp"

namespace smcdo {

namespace {

void check_positions(const Tensor& probs, std::span<const int> labels, const char* where) {
  const Shape s = probs.shape();
  if (labels.size() != s.n * s.plane()) throw DimensionError("labels", s.n * s.plane(), labels.size(), where);
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= s.c)
      throw ArgumentError(std::string(where) + ": label " + std::to_string(l) + " out of range");
}

// Class index and probability of the arg-max at one position.
std::pair<std::size_t, double> top(const Tensor& probs, std::size_t n, std::size_t p) {
  const Shape s = probs.shape();
  const double* base = probs.data().data() + n * s.sample() + p;
  std::size_t best = 0;
  double best_v = base[0];
  for (std::size_t c = 1; c < s.c; ++c) {
    const double v = base[c * s.plane()];
    if (v > best_v) {
      best_v = v;
      best = c;
    }
  }
  return {best, best_v};
}

}  // namespace

std::size_t ece_bin(double confidence, std::size_t bins) {
  if (bins == 0) throw ArgumentError("ece: at least one bin required");
  const double b = static_cast<double>(bins);
  if (!(confidence > 1.0 / b)) return 0;
  if (confidence >= 1.0) return bins - 1;
  auto k = static_cast<std::size_t>(std::ceil(confidence * b));
  k = std::clamp<std::size_t>(k, 1, bins) - 1;
  // The product above can round across a boundary; settle against the exact
  // boundary values used by the definition.
  while (k > 0 && confidence <= static_cast<double>(k) / b) --k;
  while (k + 1 < bins && confidence > static_cast<double>(k + 1) / b) ++k;
  return k;
}

CalibrationBins::CalibrationBins(std::size_t bins) : count(bins, 0), confidence_sum(bins, 0.0), correct(bins, 0) {
  if (bins == 0) throw ArgumentError("ece: at least one bin required");
}

void CalibrationBins::add(double confidence, bool is_correct) {
  const std::size_t b = ece_bin(confidence, count.size());
  ++count[b];
  confidence_sum[b] += confidence;
  correct[b] += is_correct ? 1 : 0;
}

std::uint64_t CalibrationBins::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : count) t += c;
  return t;
}

double CalibrationBins::ece() const {
  const std::uint64_t n = total();
  if (n == 0) throw DataError("ece: no samples");
  double e = 0.0;
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] == 0) continue;
    const double nb = static_cast<double>(count[b]);
    const double acc = static_cast<double>(correct[b]) / nb;
    const double conf = confidence_sum[b] / nb;
    e += nb / static_cast<double>(n) * std::abs(acc - conf);
  }
  return e;
}

CalibrationBins calibration_bins(const Tensor& probs, std::span<const int> labels, std::size_t bins) {
  check_positions(probs, labels, "ece");
  const Shape s = probs.shape();
  CalibrationBins cb(bins);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < s.plane(); ++p) {
      const auto [cls, conf] = top(probs, n, p);
      cb.add(conf, static_cast<int>(cls) == labels[n * s.plane() + p]);
    }
  return cb;
}

double ece(const Tensor& probs, std::span<const int> labels, std::size_t bins) {
  return calibration_bins(probs, labels, bins).ece();
}

double pixelwise_ece(const Tensor& probs, std::span<const int> labels, std::size_t bins) {
  return ece(probs, labels, bins);
}

std::vector<int> predictions(const Tensor& probs) {
  const Shape s = probs.shape();
  std::vector<int> out(s.n * s.plane());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < s.plane(); ++p) out[n * s.plane() + p] = static_cast<int>(top(probs, n, p).first);
  return out;
}

double accuracy(const Tensor& probs, std::span<const int> labels) {
  check_positions(probs, labels, "accuracy");
  const auto pred = predictions(probs);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double nll(const Tensor& probs, std::span<const int> labels) {
  check_positions(probs, labels, "nll");
  const Shape s = probs.shape();
  double sum = 0.0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < s.plane(); ++p) {
      const auto label = static_cast<std::size_t>(labels[n * s.plane() + p]);
      sum -= std::log(std::max(probs[n * s.sample() + label * s.plane() + p], kNllFloor));
    }
  return sum / static_cast<double>(labels.size());
}

double dice(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw DimensionError("mask pixels", truth.size(), pred.size(), "dice");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    a += p;
    b += t;
    both += p && t;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double mean_dice(const Tensor& probs, std::span<const int> labels) {
  const Shape s = probs.shape();
  if (s.c != 2) throw DimensionError("channels", 2, s.c, "dice");
  check_positions(probs, labels, "dice");
  const auto pred = predictions(probs);
  const std::span<const int> all(pred);
  double sum = 0.0;
  for (std::size_t n = 0; n < s.n; ++n)
    sum += dice(all.subspan(n * s.plane(), s.plane()), labels.subspan(n * s.plane(), s.plane()));
  return sum / static_cast<double>(s.n);
}

double mean_value(const Tensor& t) {
  double sum = 0.0;
  for (double v : t.data()) sum += v;
  return sum / static_cast<double>(t.numel());
}

}  // namespace smcdo
