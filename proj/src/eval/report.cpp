#include "eval/report.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tensor/error.hpp"

namespace smcdo {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw DataError("bad number '" + s + "' in results row");
  return v;
}

std::optional<double> optional_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

CalibrationReport score(const EnsembleOutput& out, std::span<const int> labels, std::size_t bins,
                        const std::optional<CorruptionSpec>& corruption) {
  const Tensor& p = out.mean_probs;
  CalibrationReport r;
  if (corruption) {
    r.kind = to_string(corruption->kind);
    r.level = corruption->level;
  }
  r.accuracy = accuracy(p, labels);
  r.ece = ece(p, labels, bins);
  r.nll = nll(p, labels);
  r.entropy = mean_value(out.predictive_entropy);
  if (p.shape().plane() > 1 && p.shape().c == 2) {
    r.dice = mean_dice(p, labels);
    r.pixelwise_ece = pixelwise_ece(p, labels, bins);
  }
  for (double v : {r.accuracy, r.ece, r.nll, r.entropy})
    if (!std::isfinite(v)) throw NumericError("non-finite metric in condition '" + r.condition + "'");
  return r;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{"condition", "kind",    "level", "accuracy",     "ece",
                                             "nll",       "entropy", "dice",  "pixelwise_ece"};
  return cols;
}

std::string csv_header() {
  std::string h;
  for (const auto& c : csv_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

std::string to_csv_row(const CalibrationReport& r) {
  std::ostringstream os;
  os << csv_field(r.condition) << ',' << csv_field(r.kind) << ',' << r.level << ',' << format_double(r.accuracy) << ','
     << format_double(r.ece) << ',' << format_double(r.nll) << ',' << format_double(r.entropy) << ','
     << (r.dice ? format_double(*r.dice) : "") << ',' << (r.pixelwise_ece ? format_double(*r.pixelwise_ece) : "");
  return os.str();
}

CalibrationReport from_csv_row(const std::string& line) {
  const auto f = split_csv(line);
  if (f.size() != csv_columns().size()) throw DataError("results row has " + std::to_string(f.size()) + " fields");
  CalibrationReport r;
  r.condition = f[0];
  r.kind = f[1];
  r.level = static_cast<int>(parse_double(f[2]));
  r.accuracy = parse_double(f[3]);
  r.ece = parse_double(f[4]);
  r.nll = parse_double(f[5]);
  r.entropy = parse_double(f[6]);
  if (!f[7].empty()) r.dice = parse_double(f[7]);
  if (!f[8].empty()) r.pixelwise_ece = parse_double(f[8]);
  return r;
}

nlohmann::ordered_json to_json(const CalibrationReport& r) {
  nlohmann::ordered_json j;
  j["condition"] = r.condition;
  j["kind"] = r.kind;
  j["level"] = r.level;
  j["accuracy"] = r.accuracy;
  j["ece"] = r.ece;
  j["nll"] = r.nll;
  j["entropy"] = r.entropy;
  j["dice"] = r.dice ? nlohmann::ordered_json(*r.dice) : nlohmann::ordered_json(nullptr);
  j["pixelwise_ece"] = r.pixelwise_ece ? nlohmann::ordered_json(*r.pixelwise_ece) : nlohmann::ordered_json(nullptr);
  return j;
}

CalibrationReport from_json(const nlohmann::json& j) {
  CalibrationReport r;
  try {
    r.condition = j.at("condition").get<std::string>();
    r.kind = j.at("kind").get<std::string>();
    r.level = j.at("level").get<int>();
    r.accuracy = j.at("accuracy").get<double>();
    r.ece = j.at("ece").get<double>();
    r.nll = j.at("nll").get<double>();
    r.entropy = j.at("entropy").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report object: ") + e.what());
  }
  r.dice = optional_field(j, "dice");
  r.pixelwise_ece = optional_field(j, "pixelwise_ece");
  return r;
}

void write_reports(const std::string& dir, std::span<const CalibrationReport> reports) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto base = std::filesystem::path(dir);
  std::ofstream csv(base / "results.csv", std::ios::trunc);
  std::ofstream jsonl(base / "results.jsonl", std::ios::trunc);
  if (!csv || !jsonl) throw IoError("cannot write results into '" + dir + "'");
  csv << csv_header() << '\n';
  for (const auto& r : reports) {
    csv << to_csv_row(r) << '\n';
    jsonl << to_json(r).dump() << '\n';
  }
  if (!csv || !jsonl) throw IoError("failed writing results into '" + dir + "'");
}

}  // namespace smcdo
