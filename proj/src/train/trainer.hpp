#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "graph/model_graph.hpp"
#include "train/augment.hpp"
#include "train/dataset.hpp"
#include "train/optimizer.hpp"

namespace smcdo {

enum class OptimizerKind { sgd, adam };

const char* to_string(OptimizerKind k) noexcept;
OptimizerKind parse_optimizer_kind(const std::string& s);

struct TrainConfig {
  int epochs = 2;
  LrSchedule schedule;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  AugmentConfig augmentation;
  double rate_train = 0.1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::sgd;
  // Segmentation only: add the soft dice loss to the per-pixel cross entropy.
  bool dice_term = true;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

using EpochCallback = std::function<void(const EpochRecord&, const ModelGraph&)>;

/// Trains `graph` in place. Each epoch visits a seed-derived permutation of
/// the data in batches; the final short batch is kept unless it holds a
/// single sample. Dropout runs at config.rate_train in the graph's mode.
/// Throws NumericError naming the epoch and batch on a non-finite loss.
TrainHistory train(ModelGraph& graph, const Dataset& data, const Dataset* validation, const TrainConfig& config,
                   const EpochCallback& on_epoch = {});

/// Fraction of correctly classified images (or pixels) under a vanilla pass,
/// evaluated in chunks of `chunk` samples.
double vanilla_accuracy(const ModelGraph& graph, const Dataset& data, std::size_t chunk = 128);

}  // namespace smcdo
