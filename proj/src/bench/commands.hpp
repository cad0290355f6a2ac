#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bench/config.hpp"
#include "eval/report.hpp"
#include "graph/model_graph.hpp"

namespace smcdo {

/// Command-line overrides shared by every subcommand.
struct CommandOptions {
  std::string config_path;
  std::vector<std::string> checkpoints;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::ostream* log = nullptr;  // progress lines, may be null
};

/// Loads, applies overrides and validates.
ExperimentConfig resolve_config(const CommandOptions& options);

/// Trained weights plus the sidecar facts needed to evaluate them.
struct Checkpoint {
  std::string path;
  ModelGraph graph;
  ArchConfig arch;
  DropoutMode mode = DropoutMode::spatial;
  double rate_train = 0.0;
  std::optional<Normalization> normalization;
  std::string weights_hash;
  nlohmann::ordered_json sidecar;
};

/// `<stem>.json` next to a `<stem>.bin` weight file.
std::string sidecar_path(const std::string& weights_path);
void save_checkpoint(const std::string& weights_path, const ModelGraph& graph, const nlohmann::ordered_json& sidecar);
/// Throws DataError when either file is missing or malformed.
Checkpoint load_checkpoint(const std::string& weights_path);

struct LoadedData {
  Dataset train;  // empty unless requested
  Dataset test;   // pixels in [0,1], not normalized
};
LoadedData load_data(const ExperimentConfig& config, bool want_train, bool want_test);

/// One evaluation cell of the grid. Vanilla cells ignore rate_inf; deep
/// ensemble cells combine every checkpoint.
struct EvalCell {
  std::size_t checkpoint = 0;
  ExecutorKind executor = ExecutorKind::mcdo_branched;
  double rate_inf = 0.0;
  std::optional<CorruptionSpec> corruption;
};

/// Grid order: checkpoints, then executors, then rate_inf, then conditions
/// (clean first, then kinds x levels).
std::vector<EvalCell> build_grid(const EvalConfig& eval, std::size_t checkpoints);

/// "<executor>:rt<rate_train>[:ri<rate_inf>:m<M>]:<clean|kind-level>".
std::string condition_id(const EvalCell& cell, const std::vector<Checkpoint>& checkpoints, const EvalConfig& eval);

struct CellResult {
  CalibrationReport report;
  Tensor entropy;  // N x 1 x H x W of the evaluated set
};

CellResult evaluate_cell(const EvalCell& cell, const std::vector<Checkpoint>& checkpoints, const Dataset& test,
                         const EvalConfig& eval);

/// Latency of one executor over a fixed input.
struct LatencyRecord {
  std::string executor;
  std::size_t num_samples = 1;
  std::size_t batch = 1;
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;
  double overhead = 1.0;  // median relative to vanilla
  std::uint64_t conv_macs = 0;
  double flop_ratio = 1.0;  // conv_macs relative to vanilla
  std::optional<double> reference_s;  // published embedded-board latency
};

struct TimingSummary {
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;
};

/// Linear-interpolated quantile of unsorted samples, q in [0,1].
double quantile(std::vector<double> samples, double q);

/// Discards `warmup` calls, then times `timed` calls of `fn`.
TimingSummary time_calls(const std::function<void()>& fn, std::size_t warmup, std::size_t timed);

/// Times every configured executor on `graph` (rate_inf from the bench
/// config) over one fixed random input. Vanilla is always measured first as
/// the overhead baseline.
std::vector<LatencyRecord> bench_model(const ModelGraph& graph, const ArchConfig& arch, const BenchConfig& bench,
                                       std::size_t image_size);

nlohmann::ordered_json to_json(const LatencyRecord& r);
std::string latency_csv_header();
std::string to_csv_row(const LatencyRecord& r);

// Subcommands. Each returns what it wrote; errors propagate as exceptions.
std::vector<std::string> cmd_train(const ExperimentConfig& config, const CommandOptions& options);
std::vector<CalibrationReport> cmd_eval(const ExperimentConfig& config, const CommandOptions& options);
std::vector<CalibrationReport> cmd_sweep(const ExperimentConfig& config, const CommandOptions& options);
std::vector<LatencyRecord> cmd_bench(const ExperimentConfig& config, const CommandOptions& options);
std::vector<std::string> cmd_corrupt_preview(const ExperimentConfig& config, const CommandOptions& options);

/// Dispatches by name, mapping failures to exit codes: 0 ok, 2 config,
/// 3 data, 4 numeric, 1 anything else. The message goes to `err`.
int run_command(const std::string& name, const CommandOptions& options, std::ostream& err);

/// Exit code for an exception thrown by the library.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace smcdo
