#include "train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "graph/executor.hpp"
#include "train/loss.hpp"
#include "train/training_pass.hpp"

namespace smcdo {

namespace {

// Third seed component for the non-mask streams, far from any batch index.
constexpr std::uint64_t kShuffleStream = 1ull << 62;
constexpr std::uint64_t kAugmentStream = (1ull << 62) + 1;

std::size_t argmax_channel(const Tensor& probs, std::size_t n, std::size_t p) {
  const Shape s = probs.shape();
  std::size_t best = 0;
  double best_v = probs[n * s.sample() + p];
  for (std::size_t c = 1; c < s.c; ++c) {
    const double v = probs[n * s.sample() + c * s.plane() + p];
    if (v > best_v) {
      best_v = v;
      best = c;
    }
  }
  return best;
}

std::size_t count_correct(const Tensor& probs, std::span<const int> labels) {
  const Shape s = probs.shape();
  std::size_t correct = 0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < s.plane(); ++p)
      if (argmax_channel(probs, n, p) == static_cast<std::size_t>(labels[n * s.plane() + p])) ++correct;
  return correct;
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& c) {
  if (c.optimizer == OptimizerKind::adam) return std::make_unique<Adam>(c.weight_decay);
  return std::make_unique<Sgd>(c.momentum, c.weight_decay);
}

}  // namespace

const char* to_string(OptimizerKind k) noexcept { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(rate_train >= 0.0 && rate_train <= kMaxDropoutRate))
    throw ConfigError("train.rate_train must be in [0, " + std::to_string(kMaxDropoutRate) + "]");
  LrSchedule check(schedule.milestones());
  (void)check;
}

double vanilla_accuracy(const ModelGraph& graph, const Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw DataError("vanilla_accuracy: empty dataset");
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t per = data.labels_per_image();
  std::size_t correct = 0;
  for (std::size_t first = 0; first < data.size(); first += chunk) {
    const std::size_t count = std::min(chunk, data.size() - first);
    const Tensor probs = run_vanilla(graph, data.images.slice_batch(first, count));
    correct += count_correct(probs, std::span<const int>(data.labels).subspan(first * per, count * per));
  }
  return static_cast<double>(correct) / static_cast<double>(data.size() * per);
}

TrainHistory train(ModelGraph& graph, const Dataset& data, const Dataset* validation, const TrainConfig& config,
                   const EpochCallback& on_epoch) {
  config.validate();
  if (data.size() == 0) throw DataError("train: empty dataset");
  graph.validate();
  Shape one = data.images.shape();
  one.n = 1;
  const std::size_t classes = graph.output_shape(one).c;
  data.validate(classes);
  if (validation) validation->validate(classes);

  DropoutSpec spec = graph.dropout();
  spec.rate_train = config.rate_train;
  graph.set_dropout(spec);

  auto optimizer = make_optimizer(config);
  TrainingPass pass(graph);
  const bool segmentation = data.task == Task::segmentation;
  const std::size_t per = data.labels_per_image();

  TrainHistory history;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto e = static_cast<std::uint64_t>(epoch);
    const double lr = config.schedule.at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(stream_key({config.seed, e, kShuffleStream}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::mt19937_64 augment_rng(stream_key({config.seed, e, kAugmentStream}));

    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0, batch = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size, ++batch) {
      const std::size_t count = std::min(config.batch_size, order.size() - first);
      if (count == 1 && first > 0) break;
      Dataset b = subset(data, std::span<const std::size_t>(order).subspan(first, count));
      const Tensor images = segmentation ? augment(b.images, b.labels, config.augmentation, augment_rng)
                                         : augment(b.images, config.augmentation, augment_rng);
      const std::uint64_t step_seed = stream_key({config.seed, e, batch});
      const Tensor probs = pass.forward(images, step_seed);

      LossResult loss = cross_entropy_loss(probs, b.labels);
      if (segmentation && config.dice_term) {
        const LossResult d = dice_loss(probs, b.labels);
        loss.value += d.value;
        for (std::size_t i = 0; i < loss.grad.numel(); ++i) loss.grad[i] += d.grad[i];
      }
      const auto pv = probs.data();
      if (!std::isfinite(loss.value) || !std::all_of(pv.begin(), pv.end(), [](double v) { return std::isfinite(v); }))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch));

      const GradStore grads = pass.backward(loss.grad);
      optimizer->step(graph.weights(), grads, lr);

      loss_sum += loss.value * static_cast<double>(count);
      correct += count_correct(probs, b.labels);
      seen += count;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen * per);
    if (validation && validation->size() > 0) rec.val_accuracy = vanilla_accuracy(graph, *validation);
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec, graph);
  }
  return history;
}

}  // namespace smcdo
