#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eval/corruption.hpp"
#include "stochastic/dropout.hpp"
#include "train/arch.hpp"
#include "train/dataset.hpp"
#include "train/trainer.hpp"

namespace smcdo {

enum class ExecutorKind { vanilla, deep_ensemble, mcdo_sequential, mcdo_branched, mcdo_branched_fused };

const char* to_string(ExecutorKind k) noexcept;
ExecutorKind parse_executor_kind(const std::string& s);

struct DatasetConfig {
  enum class Format { cifar10, segmentation };
  Format format = Format::cifar10;
  // cifar10: binary batch files; segmentation: one directory each.
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::vector<int> classes;  // cifar10 label subset, relabelled in order; empty keeps all
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  std::size_t image_size = 64;  // segmentation resize target
  // Explicit per-channel constants, or empty to use training-set statistics.
  std::optional<Normalization> normalization;
  bool normalize = true;
};

struct EvalConfig {
  std::size_t num_samples = 3;
  std::vector<double> rate_inf{0.1, 0.3};
  std::vector<ExecutorKind> executors{ExecutorKind::mcdo_branched};
  bool include_clean = true;
  std::vector<CorruptionKind> corruption_kinds;
  std::vector<int> corruption_levels;
  std::size_t bins = 15;
  std::uint64_t seed = 0;
  std::size_t batch = 100;
  std::size_t maps = 0;  // entropy maps written per condition (segmentation)
};

struct BenchConfig {
  std::size_t warmup_iters = 3;
  std::size_t timed_iters = 20;
  std::vector<ExecutorKind> executors{ExecutorKind::vanilla, ExecutorKind::deep_ensemble,
                                      ExecutorKind::mcdo_sequential, ExecutorKind::mcdo_branched,
                                      ExecutorKind::mcdo_branched_fused};
  std::size_t num_samples = 3;
  std::size_t batch = 1;
  double rate_inf = 0.5;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  ArchConfig arch;
  DropoutMode dropout_mode = DropoutMode::spatial;
  TrainConfig train;
  // Checkpoints trained by the train command, one per rate.
  std::vector<double> rate_train{0.1};
  EvalConfig eval;
  BenchConfig bench;
  DatasetConfig dataset;
  std::string output_dir = "out";

  /// Rejects inconsistent values and missing dataset paths (ConfigError).
  void validate() const;
  /// Applies a --seed override to training, initialization and evaluation.
  void override_seed(std::uint64_t seed);
};

/// Strict parse: unknown keys, wrong types and invalid values raise
/// ConfigError. Missing keys keep their defaults.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

nlohmann::ordered_json to_json(const ArchConfig& a);
ArchConfig arch_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ExperimentConfig& c);

/// FNV-1a 64 of a byte string, as 16 lowercase hex digits.
std::string content_hash(std::string_view bytes);

}  // namespace smcdo
