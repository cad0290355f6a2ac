#include "bench/commands.hpp"

#include <cblas.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <mutex>
#include <random>
#include <thread>

#include "bench/cifar.hpp"
#include "bench/netpbm.hpp"
#include "graph/executor.hpp"
#include "graph/weights_io.hpp"
#include "tensor/error.hpp"

namespace smcdo {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointFormat = "smcdo-checkpoint/1";

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes via a temporary name so that an interrupted run never leaves a
// half-written file under the final name.
void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

void say(const CommandOptions& o, const std::string& line) {
  if (o.log) *o.log << line << std::endl;
}

Dataset limited(Dataset d, std::size_t limit) {
  if (limit == 0 || limit >= d.size()) return d;
  std::vector<std::size_t> idx(limit);
  for (std::size_t i = 0; i < limit; ++i) idx[i] = i;
  return subset(d, idx);
}

Dataset load_split(const DatasetConfig& dc, const std::vector<std::string>& paths, std::size_t limit) {
  if (dc.format == DatasetConfig::Format::cifar10) {
    Dataset d = load_cifar10(paths);
    return dc.classes.empty() ? limited(std::move(d), limit) : select_classes(d, dc.classes, limit);
  }
  std::vector<Dataset> parts;
  for (const auto& p : paths) parts.push_back(load_segmentation_pairs(p, dc.image_size));
  Dataset d;
  d.task = Task::segmentation;
  std::vector<Tensor> images;
  for (auto& part : parts) {
    images.push_back(part.images);
    d.labels.insert(d.labels.end(), part.labels.begin(), part.labels.end());
  }
  d.images = concat_batch(images);
  return limited(std::move(d), limit);
}

nlohmann::ordered_json normalization_json(const std::optional<Normalization>& n) {
  if (!n) return nullptr;
  return {{"mean", n->mean}, {"std", n->stddev}};
}

std::string checkpoint_stem(const Checkpoint& c) { return fs::path(c.path).stem().string(); }

void set_blas_single_threaded() {
  // Parallelism lives at the cell level; nested BLAS threads would only
  // oversubscribe the cores.
  openblas_set_num_threads(1);
}

}  // namespace

ExperimentConfig resolve_config(const CommandOptions& options) {
  if (options.config_path.empty()) throw ConfigError("--config is required");
  ExperimentConfig c = load_experiment_config(options.config_path);
  if (options.seed) c.override_seed(*options.seed);
  if (options.out_dir) c.output_dir = *options.out_dir;
  c.validate();
  return c;
}

std::string sidecar_path(const std::string& weights_path) {
  return fs::path(weights_path).replace_extension(".json").string();
}

void save_checkpoint(const std::string& weights_path, const ModelGraph& graph, const nlohmann::ordered_json& sidecar) {
  ensure_dir(fs::path(weights_path).parent_path().empty() ? fs::path(".") : fs::path(weights_path).parent_path());
  save_weights(graph, weights_path);
  auto side = sidecar;
  side["weights"] = fs::path(weights_path).filename().string();
  side["weights_hash"] = content_hash(read_text(weights_path));
  write_text_atomic(sidecar_path(weights_path), side.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& weights_path) {
  if (!fs::exists(weights_path)) throw DataError("checkpoint '" + weights_path + "' does not exist");
  const std::string side_path = sidecar_path(weights_path);
  if (!fs::exists(side_path)) throw DataError("checkpoint sidecar '" + side_path + "' does not exist");
  Checkpoint c;
  c.path = weights_path;
  try {
    c.sidecar = nlohmann::ordered_json::parse(read_text(side_path));
    if (c.sidecar.at("format").get<std::string>() != kCheckpointFormat)
      throw DataError(side_path + ": unknown checkpoint format");
    c.arch = arch_from_json(nlohmann::json(c.sidecar.at("arch")));
    c.mode = parse_dropout_mode(c.sidecar.at("dropout_mode").get<std::string>());
    c.rate_train = c.sidecar.at("rate_train").get<double>();
    if (!c.sidecar.at("normalization").is_null()) {
      Normalization n;
      n.mean = c.sidecar.at("normalization").at("mean").get<std::vector<double>>();
      n.stddev = c.sidecar.at("normalization").at("std").get<std::vector<double>>();
      c.normalization = n;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(side_path + ": malformed sidecar: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(side_path + ": " + e.what());
  }
  c.graph = build_model(c.arch, DropoutSpec{c.mode, c.rate_train, c.rate_train});
  load_weights(weights_path, c.graph);
  c.weights_hash = content_hash(read_text(weights_path));
  return c;
}

LoadedData load_data(const ExperimentConfig& config, bool want_train, bool want_test) {
  LoadedData d;
  const auto& dc = config.dataset;
  if (want_train) {
    if (dc.train.empty()) throw ConfigError("dataset.train is required");
    d.train = load_split(dc, dc.train, dc.train_limit);
  }
  if (want_test) {
    if (dc.test.empty()) throw ConfigError("dataset.test is required");
    d.test = load_split(dc, dc.test, dc.test_limit);
  }
  return d;
}

std::vector<EvalCell> build_grid(const EvalConfig& eval, std::size_t checkpoints) {
  std::vector<std::optional<CorruptionSpec>> conditions;
  if (eval.include_clean) conditions.push_back(std::nullopt);
  for (auto k : eval.corruption_kinds)
    for (int l : eval.corruption_levels) conditions.push_back(CorruptionSpec{k, l});
  std::vector<EvalCell> cells;
  for (std::size_t c = 0; c < checkpoints; ++c)
    for (auto ex : eval.executors) {
      if (ex == ExecutorKind::deep_ensemble) continue;
      const std::vector<double> rates = ex == ExecutorKind::vanilla ? std::vector<double>{0.0} : eval.rate_inf;
      for (double r : rates)
        for (const auto& cond : conditions) cells.push_back(EvalCell{c, ex, r, cond});
    }
  if (std::find(eval.executors.begin(), eval.executors.end(), ExecutorKind::deep_ensemble) != eval.executors.end())
    for (const auto& cond : conditions) cells.push_back(EvalCell{0, ExecutorKind::deep_ensemble, 0.0, cond});
  return cells;
}

std::string condition_id(const EvalCell& cell, const std::vector<Checkpoint>& checkpoints, const EvalConfig& eval) {
  const std::string cond = cell.corruption ? cell.corruption->id() : "clean";
  switch (cell.executor) {
    case ExecutorKind::vanilla: return checkpoint_stem(checkpoints.at(cell.checkpoint)) + ":vanilla:" + cond;
    case ExecutorKind::deep_ensemble:
      return "ensemble:deep_ensemble:m" + std::to_string(checkpoints.size()) + ":" + cond;
    default:
      return checkpoint_stem(checkpoints.at(cell.checkpoint)) + ":" + to_string(cell.executor) + ":ri" +
             fixed2(cell.rate_inf) + ":m" + std::to_string(eval.num_samples) + ":" + cond;
  }
}

CellResult evaluate_cell(const EvalCell& cell, const std::vector<Checkpoint>& checkpoints, const Dataset& test,
                         const EvalConfig& eval) {
  if (checkpoints.empty()) throw ConfigError("no checkpoints to evaluate");
  const Checkpoint& ck = checkpoints.at(cell.checkpoint);
  Tensor images = cell.corruption ? corrupt(test.images, *cell.corruption, eval.seed) : test.images;
  if (ck.normalization) images = normalize(images, *ck.normalization);

  std::vector<ModelGraph> members;
  if (cell.executor == ExecutorKind::deep_ensemble) {
    if (checkpoints.size() < 2) throw ConfigError("deep_ensemble needs at least two checkpoints");
    for (const auto& c : checkpoints) {
      if (!c.graph.same_architecture(ck.graph)) throw ConfigError("deep_ensemble members differ in architecture");
      if (c.normalization != ck.normalization) throw ConfigError("deep_ensemble members differ in normalization");
      members.push_back(c.graph);
    }
  }
  ModelGraph graph = ck.graph.clone();
  graph.set_inference_rate(cell.rate_inf);
  std::optional<BranchedModel> branched;
  if (cell.executor == ExecutorKind::mcdo_branched || cell.executor == ExecutorKind::mcdo_branched_fused)
    branched.emplace(split_at(graph, eval.num_samples));

  std::vector<Tensor> means, entropies;
  const std::size_t n = images.shape().n;
  for (std::size_t first = 0; first < n; first += eval.batch) {
    const Tensor x = images.slice_batch(first, std::min(eval.batch, n - first));
    EnsembleOutput out;
    switch (cell.executor) {
      case ExecutorKind::vanilla: out = aggregate({run_vanilla(graph, x)}); break;
      case ExecutorKind::deep_ensemble: out = run_deep_ensemble(members, x); break;
      case ExecutorKind::mcdo_sequential: out = run_mcdo(graph, x, eval.num_samples, eval.seed); break;
      case ExecutorKind::mcdo_branched: out = run_branched(*branched, x, eval.seed); break;
      case ExecutorKind::mcdo_branched_fused:
        out = run_branched(*branched, x, eval.seed, ExecOptions{.fused = true});
        break;
    }
    means.push_back(std::move(out.mean_probs));
    entropies.push_back(std::move(out.predictive_entropy));
  }
  EnsembleOutput total;
  total.mean_probs = concat_batch(means);
  total.predictive_entropy = concat_batch(entropies);
  CellResult r;
  r.report = score(total, test.labels, eval.bins, cell.corruption);
  r.report.condition = condition_id(cell, checkpoints, eval);
  r.entropy = std::move(total.predictive_entropy);
  return r;
}

namespace {

std::string cell_key(const EvalCell& cell, const std::vector<Checkpoint>& checkpoints, const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  if (cell.executor == ExecutorKind::deep_ensemble) {
    for (const auto& ck : checkpoints) j["weights"].push_back(ck.weights_hash);
  } else {
    j["weights"] = checkpoints.at(cell.checkpoint).weights_hash;
  }
  j["condition"] = condition_id(cell, checkpoints, c.eval);
  j["executor"] = to_string(cell.executor);
  j["rate_inf"] = cell.rate_inf;
  j["num_samples"] = c.eval.num_samples;
  j["bins"] = c.eval.bins;
  j["seed"] = c.eval.seed;
  j["batch"] = c.eval.batch;
  auto data = to_json(c)["dataset"];
  data.erase("train");
  data.erase("train_limit");
  j["dataset"] = data;
  return content_hash(j.dump());
}

struct GridRun {
  std::vector<CalibrationReport> reports;
  std::size_t computed = 0;
  std::size_t reused = 0;
};

// Evaluates every cell with up to `threads` workers. With a cache directory,
// finished cells are stored there one file each and reused on the next run.
GridRun run_grid(const ExperimentConfig& config, const std::vector<Checkpoint>& checkpoints, const Dataset& test,
                 const std::optional<fs::path>& cache, const CommandOptions& options) {
  const auto cells = build_grid(config.eval, checkpoints.size());
  GridRun run;
  run.reports.resize(cells.size());
  std::vector<bool> done(cells.size(), false);
  std::vector<std::string> keys(cells.size());
  if (cache) {
    ensure_dir(*cache);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      keys[i] = cell_key(cells[i], checkpoints, config);
      const fs::path f = *cache / (keys[i] + ".json");
      if (!fs::exists(f)) continue;
      try {
        run.reports[i] = from_json(nlohmann::json::parse(read_text(f.string())));
        done[i] = true;
        ++run.reused;
      } catch (const std::exception&) {
        // A corrupt cache entry is recomputed.
      }
    }
  }

  const bool maps = config.eval.maps > 0 && test.task == Task::segmentation;
  const fs::path map_dir = fs::path(config.output_dir) / "maps";
  if (maps) ensure_dir(map_dir);

  std::atomic<std::size_t> next{0};
  std::mutex writer;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next++;
      if (i >= cells.size()) return;
      if (done[i]) continue;
      try {
        {
          std::lock_guard lock(writer);
          if (failure) return;
        }
        CellResult r = evaluate_cell(cells[i], checkpoints, test, config.eval);
        std::lock_guard lock(writer);
        run.reports[i] = r.report;
        ++run.computed;
        if (cache) write_text_atomic(*cache / (keys[i] + ".json"), to_json(r.report).dump() + "\n");
        if (maps) {
          std::string stem = r.report.condition;
          std::replace(stem.begin(), stem.end(), ':', '_');
          for (std::size_t m = 0; m < std::min(config.eval.maps, test.size()); ++m)
            emit_uncertainty_map(r.entropy, m, (map_dir / (stem + "_" + std::to_string(m) + ".pgm")).string());
        }
        say(options, "cell " + std::to_string(i + 1) + "/" + std::to_string(cells.size()) + " " +
                         r.report.condition + " acc=" + format_double(r.report.accuracy) +
                         " ece=" + format_double(r.report.ece));
      } catch (...) {
        std::lock_guard lock(writer);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, cells.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  write_reports(config.output_dir, run.reports);
  return run;
}

std::vector<Checkpoint> load_checkpoints(const std::vector<std::string>& paths) {
  std::vector<Checkpoint> out;
  for (const auto& p : paths) out.push_back(load_checkpoint(p));
  return out;
}

}  // namespace

std::vector<std::string> cmd_train(const ExperimentConfig& config, const CommandOptions& options) {
  set_blas_single_threaded();
  const LoadedData data = load_data(config, true, !config.dataset.test.empty());
  std::optional<Normalization> norm;
  if (config.dataset.normalize)
    norm = config.dataset.normalization ? *config.dataset.normalization : channel_statistics(data.train.images);
  Dataset train_set = data.train;
  Dataset test_set = data.test;
  if (norm) {
    train_set.images = normalize(train_set.images, *norm);
    if (test_set.size() > 0) test_set.images = normalize(test_set.images, *norm);
  }

  const fs::path dir = fs::path(config.output_dir) / "checkpoints";
  ensure_dir(dir);
  const std::string config_hash = content_hash(to_json(config).dump());
  std::vector<std::string> written;
  for (double rate : config.rate_train) {
    TrainConfig tc = config.train;
    tc.rate_train = rate;
    ModelGraph graph = build_model(config.arch, DropoutSpec{config.dropout_mode, rate, rate});
    const std::string stem = std::string(to_string(config.arch.family)) + "-k" +
                             std::to_string(config.arch.widening_factor) + "-rt" + fixed2(rate) + "-s" +
                             std::to_string(tc.seed);
    say(options, "training " + stem);
    const TrainHistory history = train(graph, train_set, nullptr, tc, [&](const EpochRecord& r, const ModelGraph&) {
      say(options, "  epoch " + std::to_string(r.epoch) + " loss=" + format_double(r.train_loss) +
                       " acc=" + format_double(r.train_accuracy) + " lr=" + format_double(r.lr));
    });

    nlohmann::ordered_json side;
    side["format"] = kCheckpointFormat;
    side["config_hash"] = config_hash;
    side["arch"] = to_json(config.arch);
    side["dropout_mode"] = to_string(config.dropout_mode);
    side["rate_train"] = rate;
    side["seed"] = tc.seed;
    side["epoch"] = tc.epochs;
    side["normalization"] = normalization_json(norm);
    const EpochRecord& last = history.epochs.back();
    side["metrics"]["train_loss"] = last.train_loss;
    side["metrics"]["train_accuracy"] = last.train_accuracy;
    side["metrics"]["test_accuracy"] =
        test_set.size() > 0 ? nlohmann::ordered_json(vanilla_accuracy(graph, test_set)) : nullptr;
    side["history"] = nlohmann::ordered_json::array();
    for (const auto& e : history.epochs)
      side["history"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss},
                                 {"train_accuracy", e.train_accuracy}, {"lr", e.lr}});
    const std::string path = (dir / (stem + ".bin")).string();
    save_checkpoint(path, graph, side);
    written.push_back(path);
    say(options, "wrote " + path);
  }
  return written;
}

std::vector<CalibrationReport> cmd_eval(const ExperimentConfig& config, const CommandOptions& options) {
  set_blas_single_threaded();
  if (options.checkpoints.empty()) throw ConfigError("eval needs --checkpoint");
  const auto checkpoints = load_checkpoints(options.checkpoints);
  const LoadedData data = load_data(config, false, true);
  return run_grid(config, checkpoints, data.test, std::nullopt, options).reports;
}

std::vector<CalibrationReport> cmd_sweep(const ExperimentConfig& config, const CommandOptions& options) {
  set_blas_single_threaded();
  std::vector<std::string> paths = options.checkpoints;
  if (paths.empty()) {
    // Default to everything the train command left in the output directory.
    const fs::path dir = fs::path(config.output_dir) / "checkpoints";
    if (fs::is_directory(dir))
      for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".bin") paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw DataError("no checkpoints given and none found in '" + dir.string() + "'");
  }
  const auto checkpoints = load_checkpoints(paths);
  const LoadedData data = load_data(config, false, true);
  const GridRun run = run_grid(config, checkpoints, data.test, fs::path(config.output_dir) / "cells", options);
  say(options, "sweep: " + std::to_string(run.computed) + " computed, " + std::to_string(run.reused) + " reused");
  return run.reports;
}

double quantile(std::vector<double> samples, double q) {
  if (samples.empty()) throw ArgumentError("quantile of no samples");
  std::sort(samples.begin(), samples.end());
  const double pos = q * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, samples.size() - 1);
  return samples[lo] + (pos - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

TimingSummary time_calls(const std::function<void()>& fn, std::size_t warmup, std::size_t timed) {
  if (timed == 0) throw ArgumentError("time_calls: no timed iterations");
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> ms(timed);
  for (auto& m : ms) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    m = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  return {quantile(ms, 0.5), quantile(ms, 0.1), quantile(ms, 0.9)};
}

std::vector<LatencyRecord> bench_model(const ModelGraph& source, const ArchConfig& arch, const BenchConfig& bench,
                                       std::size_t image_size) {
  ModelGraph graph = source.clone();
  graph.set_inference_rate(bench.rate_inf);
  std::mt19937_64 rng(bench.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor input(Shape{bench.batch, arch.input_channels, image_size, image_size});
  for (double& v : input.data()) v = u(rng);

  const std::size_t m = bench.num_samples;
  std::vector<ModelGraph> members;
  std::optional<BranchedModel> branched;
  auto ensure_members = [&] {
    if (members.empty())
      for (std::size_t i = 0; i < m; ++i) members.push_back(graph.clone());
  };
  auto ensure_branched = [&] {
    if (!branched) branched.emplace(split_at(graph, m));
  };

  auto runner = [&](ExecutorKind ex, ExecCounters* counters) -> std::function<void()> {
    const ExecOptions plain{.fused = false, .counters = counters};
    const ExecOptions fused{.fused = true, .counters = counters};
    switch (ex) {
      case ExecutorKind::vanilla: return [&, plain] { (void)run_vanilla(graph, input, plain); };
      case ExecutorKind::deep_ensemble:
        ensure_members();
        return [&, plain] { (void)run_deep_ensemble(members, input, plain); };
      case ExecutorKind::mcdo_sequential: return [&, plain] { (void)run_mcdo(graph, input, m, bench.seed, plain); };
      case ExecutorKind::mcdo_branched:
        ensure_branched();
        return [&, plain] { (void)run_branched(*branched, input, bench.seed, plain); };
      case ExecutorKind::mcdo_branched_fused:
        if (graph.dropout().mode != DropoutMode::spatial)
          throw StateError("mcdo_branched_fused needs spatial dropout sites");
        ensure_branched();
        return [&, fused] { (void)run_branched(*branched, input, bench.seed, fused); };
    }
    throw ArgumentError("unknown executor");
  };

  std::vector<ExecutorKind> order{ExecutorKind::vanilla};
  for (auto ex : bench.executors)
    if (ex != ExecutorKind::vanilla) order.push_back(ex);

  std::vector<LatencyRecord> out;
  for (auto ex : order) {
    ExecCounters counters;
    runner(ex, &counters)();
    const TimingSummary t = time_calls(runner(ex, nullptr), bench.warmup_iters, bench.timed_iters);
    LatencyRecord r;
    r.executor = to_string(ex);
    r.num_samples = ex == ExecutorKind::vanilla ? 1 : m;
    r.batch = bench.batch;
    r.median_ms = t.median_ms;
    r.p10_ms = t.p10_ms;
    r.p90_ms = t.p90_ms;
    r.conv_macs = counters.conv_macs;
    switch (ex) {
      case ExecutorKind::vanilla: r.reference_s = 0.9; break;
      case ExecutorKind::deep_ensemble: r.reference_s = 2.7; break;
      case ExecutorKind::mcdo_sequential: r.reference_s = 2.8; break;
      case ExecutorKind::mcdo_branched: r.reference_s = 1.4; break;
      case ExecutorKind::mcdo_branched_fused: break;
    }
    out.push_back(r);
  }
  for (auto& r : out) {
    r.overhead = r.median_ms / out.front().median_ms;
    r.flop_ratio = static_cast<double>(r.conv_macs) / static_cast<double>(out.front().conv_macs);
  }
  out.front().overhead = 1.0;
  out.front().flop_ratio = 1.0;
  return out;
}

nlohmann::ordered_json to_json(const LatencyRecord& r) {
  nlohmann::ordered_json j;
  j["executor"] = r.executor;
  j["num_samples"] = r.num_samples;
  j["batch"] = r.batch;
  j["median_ms"] = r.median_ms;
  j["p10_ms"] = r.p10_ms;
  j["p90_ms"] = r.p90_ms;
  j["overhead"] = r.overhead;
  j["conv_macs"] = r.conv_macs;
  j["flop_ratio"] = r.flop_ratio;
  // Published embedded-board measurements, for context only.
  j["reference_s"] = r.reference_s ? nlohmann::ordered_json(*r.reference_s) : nlohmann::ordered_json(nullptr);
  return j;
}

std::string latency_csv_header() {
  return "executor,num_samples,batch,median_ms,p10_ms,p90_ms,overhead,conv_macs,flop_ratio,reference_s";
}

std::string to_csv_row(const LatencyRecord& r) {
  return r.executor + "," + std::to_string(r.num_samples) + "," + std::to_string(r.batch) + "," +
         format_double(r.median_ms) + "," + format_double(r.p10_ms) + "," + format_double(r.p90_ms) + "," +
         format_double(r.overhead) + "," + std::to_string(r.conv_macs) + "," + format_double(r.flop_ratio) + "," +
         (r.reference_s ? format_double(*r.reference_s) : "");
}

std::vector<LatencyRecord> cmd_bench(const ExperimentConfig& config, const CommandOptions& options) {
  set_blas_single_threaded();
  ModelGraph graph;
  ArchConfig arch = config.arch;
  if (!options.checkpoints.empty()) {
    Checkpoint ck = load_checkpoint(options.checkpoints.front());
    graph = std::move(ck.graph);
    arch = ck.arch;
  } else {
    // Latency does not depend on the weight values.
    graph = build_model(arch, DropoutSpec{config.dropout_mode, config.bench.rate_inf, config.bench.rate_inf});
  }
  const std::size_t size =
      arch.family == ArchFamily::mini_segnet ? config.dataset.image_size : kCifarSide;
  const auto records = bench_model(graph, arch, config.bench, size);
  const fs::path dir(config.output_dir);
  ensure_dir(dir);
  std::string csv = latency_csv_header() + "\n", jsonl;
  for (const auto& r : records) {
    csv += to_csv_row(r) + "\n";
    jsonl += to_json(r).dump() + "\n";
    say(options, r.executor + ": median " + format_double(r.median_ms) + " ms, overhead " + format_double(r.overhead));
  }
  write_text_atomic(dir / "bench.csv", csv);
  write_text_atomic(dir / "bench.jsonl", jsonl);
  return records;
}

std::vector<std::string> cmd_corrupt_preview(const ExperimentConfig& config, const CommandOptions& options) {
  const LoadedData data = load_data(config, false, true);
  const std::size_t count = std::min<std::size_t>(config.eval.maps > 0 ? config.eval.maps : 4, data.test.size());
  const Tensor images = data.test.images.slice_batch(0, count);
  std::vector<CorruptionKind> kinds = config.eval.corruption_kinds;
  std::vector<int> levels = config.eval.corruption_levels;
  if (kinds.empty()) {
    for (int k = 0; k < 5; ++k) kinds.push_back(static_cast<CorruptionKind>(k));
    levels = {1, 2, 3, 4, 5};
  }
  const fs::path dir = fs::path(config.output_dir) / "preview";
  ensure_dir(dir);
  const std::string ext = images.shape().c == 1 ? ".pgm" : ".ppm";
  std::vector<std::string> written;
  auto emit = [&](const Tensor& t, const std::string& name) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::string path = (dir / (name + "_" + std::to_string(i) + ext)).string();
      write_netpbm(path, tensor_to_image(t, i));
      written.push_back(path);
    }
  };
  emit(images, "clean");
  for (auto k : kinds)
    for (int l : levels) {
      const CorruptionSpec spec{k, l};
      emit(corrupt(images, spec, config.eval.seed), spec.id());
    }
  say(options, "wrote " + std::to_string(written.size()) + " preview images to " + dir.string());
  return written;
}

int exit_code_for(const std::exception& e) noexcept {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (!err) return 1;
  switch (err->code()) {
    case ErrorCode::config:
    case ErrorCode::invalid_argument:
    case ErrorCode::state: return 2;
    case ErrorCode::data:
    case ErrorCode::dimension:
    case ErrorCode::io: return 3;
    case ErrorCode::numeric: return 4;
  }
  return 1;
}

int run_command(const std::string& name, const CommandOptions& options, std::ostream& err) {
  try {
    const ExperimentConfig config = resolve_config(options);
    if (name == "train")
      cmd_train(config, options);
    else if (name == "eval")
      cmd_eval(config, options);
    else if (name == "sweep")
      cmd_sweep(config, options);
    else if (name == "bench")
      cmd_bench(config, options);
    else if (name == "corrupt-preview")
      cmd_corrupt_preview(config, options);
    else
      throw ConfigError("unknown command '" + name + "'");
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return exit_code_for(e);
  }
}

}  // namespace smcdo
