#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "eval/corruption.hpp"
#include "eval/metrics.hpp"
#include "graph/executor.hpp"

namespace smcdo {

/// Metrics of one evaluation condition. `kind` is "clean" with level 0 for
/// uncorrupted data. Segmentation-only metrics are empty for classification.
struct CalibrationReport {
  std::string condition;
  std::string kind = "clean";
  int level = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  double nll = 0.0;
  double entropy = 0.0;  // mean predictive entropy
  std::optional<double> dice;
  std::optional<double> pixelwise_ece;

  bool operator==(const CalibrationReport&) const = default;
};

/// Fills the metric fields from an ensemble (or single-pass) output.
/// Segmentation is detected by H*W > 1 with two classes.
CalibrationReport score(const EnsembleOutput& out, std::span<const int> labels, std::size_t bins,
                        const std::optional<CorruptionSpec>& corruption);

/// Column order: condition, kind, level, accuracy, ece, nll, entropy, dice, pixelwise_ece.
const std::vector<std::string>& csv_columns();
std::string csv_header();
std::string to_csv_row(const CalibrationReport& r);
CalibrationReport from_csv_row(const std::string& line);

nlohmann::ordered_json to_json(const CalibrationReport& r);
CalibrationReport from_json(const nlohmann::json& j);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

/// Writes results.csv and results.jsonl into `dir`, one row/line per report
/// in the given order.
void write_reports(const std::string& dir, std::span<const CalibrationReport> reports);

}  // namespace smcdo
