#include "bench/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>

#include "tensor/error.hpp"

namespace smcdo {

namespace {

using json = nlohmann::json;

constexpr const char* kExecutorNames[] = {"vanilla", "deep_ensemble", "mcdo_sequential", "mcdo_branched",
                                          "mcdo_branched_fused"};

// Fails closed: every key of `j` must be listed.
const json& object_at(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + where + "." + key + "'");
  }
  return j;
}

template <class T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string name = where + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(name + " must be a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(name + " must be an integer");
    if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
      throw ConfigError(name + " must be non-negative");
    out = v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(name + " must be a number");
    out = v.get<T>();
  } else {
    if (!v.is_string()) throw ConfigError(name + " must be a string");
    out = v.get<std::string>();
  }
}

template <class T>
void read_list(const json& j, const char* key, const std::string& where, std::vector<T>& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string name = where + "." + key;
  out.clear();
  if (!v.is_array()) {
    // A scalar stands for a one-element list.
    json wrapped = json::object({{key, v}});
    T one{};
    read(wrapped, key, where, one);
    out.push_back(one);
    return;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    json wrapped = json::object({{key, v[i]}});
    T one{};
    read(wrapped, key, where, one);
    out.push_back(one);
  }
}

void parse_arch(const json& j, ArchConfig& a, DropoutMode& mode) {
  const std::string w = "arch";
  object_at(j, w,
            {"family", "depth_blocks", "widening_factor", "base_channels", "first_stochastic_layer", "num_classes",
             "input_channels", "stages", "init_seed", "dropout_mode"});
  std::string s;
  if (j.contains("family")) {
    read(j, "family", w, s);
    a.family = parse_arch_family(s);
  }
  read(j, "depth_blocks", w, a.depth_blocks);
  read(j, "widening_factor", w, a.widening_factor);
  read(j, "base_channels", w, a.base_channels);
  read(j, "first_stochastic_layer", w, a.first_stochastic_layer);
  read(j, "num_classes", w, a.num_classes);
  read(j, "input_channels", w, a.input_channels);
  read(j, "stages", w, a.stages);
  read(j, "init_seed", w, a.init_seed);
  if (j.contains("dropout_mode")) {
    read(j, "dropout_mode", w, s);
    try {
      mode = parse_dropout_mode(s);
    } catch (const Error& e) {
      throw ConfigError(std::string("arch.dropout_mode: ") + e.what());
    }
  }
}

void parse_train(const json& j, ExperimentConfig& c) {
  const std::string w = "train";
  object_at(j, w,
            {"epochs", "lr_schedule", "momentum", "weight_decay", "batch_size", "augmentation", "rate_train",
             "optimizer", "dice_term", "seed"});
  TrainConfig& t = c.train;
  read(j, "epochs", w, t.epochs);
  if (j.contains("lr_schedule")) {
    const json& s = j.at("lr_schedule");
    if (!s.is_array()) throw ConfigError("train.lr_schedule must be a list of [epoch, lr] pairs");
    std::vector<std::pair<int, double>> m;
    for (const auto& e : s) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number())
        throw ConfigError("train.lr_schedule entries must be [epoch, lr]");
      m.emplace_back(e[0].get<int>(), e[1].get<double>());
    }
    t.schedule = LrSchedule(std::move(m));
  }
  read(j, "momentum", w, t.momentum);
  read(j, "weight_decay", w, t.weight_decay);
  read(j, "batch_size", w, t.batch_size);
  if (j.contains("augmentation")) {
    const json& a = object_at(j.at("augmentation"), w + ".augmentation", {"pad_crop", "horizontal_flip"});
    read(a, "pad_crop", w + ".augmentation", t.augmentation.pad_crop);
    read(a, "horizontal_flip", w + ".augmentation", t.augmentation.horizontal_flip);
  }
  read_list(j, "rate_train", w, c.rate_train);
  if (j.contains("optimizer")) {
    std::string s;
    read(j, "optimizer", w, s);
    t.optimizer = parse_optimizer_kind(s);
  }
  read(j, "dice_term", w, t.dice_term);
  read(j, "seed", w, t.seed);
}

std::vector<ExecutorKind> parse_executors(const json& j, const std::string& where) {
  std::vector<std::string> names;
  read_list(j, "executors", where, names);
  std::vector<ExecutorKind> out;
  for (const auto& n : names) out.push_back(parse_executor_kind(n));
  return out;
}

void parse_eval(const json& j, EvalConfig& e) {
  const std::string w = "eval";
  object_at(j, w,
            {"num_samples", "rate_inf", "executors", "include_clean", "corruptions", "bins", "seed", "batch",
             "maps"});
  read(j, "num_samples", w, e.num_samples);
  read_list(j, "rate_inf", w, e.rate_inf);
  if (j.contains("executors")) e.executors = parse_executors(j, w);
  read(j, "include_clean", w, e.include_clean);
  if (j.contains("corruptions")) {
    const json& c = object_at(j.at("corruptions"), w + ".corruptions", {"kinds", "levels"});
    std::vector<std::string> kinds;
    read_list(c, "kinds", w + ".corruptions", kinds);
    e.corruption_kinds.clear();
    for (const auto& k : kinds) e.corruption_kinds.push_back(parse_corruption_kind(k));
    read_list(c, "levels", w + ".corruptions", e.corruption_levels);
  }
  read(j, "bins", w, e.bins);
  read(j, "seed", w, e.seed);
  read(j, "batch", w, e.batch);
  read(j, "maps", w, e.maps);
}

void parse_bench(const json& j, BenchConfig& b) {
  const std::string w = "bench";
  object_at(j, w, {"warmup_iters", "timed_iters", "executors", "num_samples", "batch", "rate_inf", "seed"});
  read(j, "warmup_iters", w, b.warmup_iters);
  read(j, "timed_iters", w, b.timed_iters);
  if (j.contains("executors")) b.executors = parse_executors(j, w);
  read(j, "num_samples", w, b.num_samples);
  read(j, "batch", w, b.batch);
  read(j, "rate_inf", w, b.rate_inf);
  read(j, "seed", w, b.seed);
}

void parse_dataset(const json& j, DatasetConfig& d) {
  const std::string w = "dataset";
  object_at(j, w, {"format", "train", "test", "classes", "train_limit", "test_limit", "image_size", "normalization"});
  if (j.contains("format")) {
    std::string s;
    read(j, "format", w, s);
    if (s == "cifar10")
      d.format = DatasetConfig::Format::cifar10;
    else if (s == "segmentation")
      d.format = DatasetConfig::Format::segmentation;
    else
      throw ConfigError("dataset.format must be 'cifar10' or 'segmentation', got '" + s + "'");
  }
  read_list(j, "train", w, d.train);
  read_list(j, "test", w, d.test);
  read_list(j, "classes", w, d.classes);
  read(j, "train_limit", w, d.train_limit);
  read(j, "test_limit", w, d.test_limit);
  read(j, "image_size", w, d.image_size);
  if (j.contains("normalization")) {
    const json& n = j.at("normalization");
    if (n.is_string()) {
      const auto s = n.get<std::string>();
      if (s == "dataset") {
        d.normalize = true;
        d.normalization.reset();
      } else if (s == "none") {
        d.normalize = false;
      } else {
        throw ConfigError("dataset.normalization must be 'dataset', 'none' or {mean, std}");
      }
    } else {
      object_at(n, w + ".normalization", {"mean", "std"});
      Normalization norm;
      read_list(n, "mean", w + ".normalization", norm.mean);
      read_list(n, "std", w + ".normalization", norm.stddev);
      d.normalize = true;
      d.normalization = norm;
    }
  }
}

json to_json_list(const std::vector<ExecutorKind>& v) {
  json out = json::array();
  for (auto k : v) out.push_back(to_string(k));
  return out;
}

}  // namespace

const char* to_string(ExecutorKind k) noexcept { return kExecutorNames[static_cast<int>(k)]; }

ExecutorKind parse_executor_kind(const std::string& s) {
  for (int i = 0; i < 5; ++i)
    if (s == kExecutorNames[i]) return static_cast<ExecutorKind>(i);
  throw ConfigError("unknown executor '" + s + "'");
}

void ExperimentConfig::validate() const {
  arch.validate();
  train.validate();
  if (rate_train.empty()) throw ConfigError("train.rate_train must not be empty");
  for (double r : rate_train)
    if (!(r >= 0.0 && r <= kMaxDropoutRate)) throw ConfigError("train.rate_train values must be in [0, 0.95]");

  if (eval.num_samples < 1) throw ConfigError("eval.num_samples must be >= 1");
  if (eval.rate_inf.empty()) throw ConfigError("eval.rate_inf must not be empty");
  for (double r : eval.rate_inf)
    if (!(r >= 0.0 && r <= kMaxDropoutRate)) throw ConfigError("eval.rate_inf values must be in [0, 0.95]");
  if (eval.executors.empty()) throw ConfigError("eval.executors must not be empty");
  if (eval.corruption_kinds.empty() != eval.corruption_levels.empty())
    throw ConfigError("eval.corruptions needs both kinds and levels");
  for (int l : eval.corruption_levels)
    if (l < 1 || l > kCorruptionLevels) throw ConfigError("eval.corruptions.levels must be in 1..5");
  if (!eval.include_clean && eval.corruption_kinds.empty())
    throw ConfigError("eval: no conditions (include_clean is false and no corruptions)");
  if (eval.bins < 1) throw ConfigError("eval.bins must be >= 1");
  if (eval.batch < 1) throw ConfigError("eval.batch must be >= 1");

  if (bench.timed_iters < 10) throw ConfigError("bench.timed_iters must be >= 10");
  if (bench.executors.empty()) throw ConfigError("bench.executors must not be empty");
  if (bench.num_samples < 1) throw ConfigError("bench.num_samples must be >= 1");
  if (bench.batch < 1) throw ConfigError("bench.batch must be >= 1");
  if (!(bench.rate_inf >= 0.0 && bench.rate_inf <= kMaxDropoutRate))
    throw ConfigError("bench.rate_inf must be in [0, 0.95]");

  const bool seg = dataset.format == DatasetConfig::Format::segmentation;
  if (seg != (arch.family == ArchFamily::mini_segnet))
    throw ConfigError("dataset.format and arch.family disagree (segmentation needs mini_segnet)");
  if (seg && dataset.image_size % 4 != 0) throw ConfigError("dataset.image_size must be a multiple of 4");
  for (const auto* list : {&dataset.train, &dataset.test})
    for (const auto& p : *list)
      if (!std::filesystem::exists(p)) throw ConfigError("dataset path '" + p + "' does not exist");
  for (int c : dataset.classes)
    if (c < 0 || c > 9) throw ConfigError("dataset.classes must be CIFAR-10 labels 0..9");
  const std::size_t classes = dataset.classes.empty() ? 10 : dataset.classes.size();
  if (!seg && classes != arch.num_classes)
    throw ConfigError("arch.num_classes (" + std::to_string(arch.num_classes) + ") does not match the dataset (" +
                      std::to_string(classes) + " classes)");
  if (dataset.normalization) {
    const auto& n = *dataset.normalization;
    if (n.mean.size() != arch.input_channels || n.stddev.size() != arch.input_channels)
      throw ConfigError("dataset.normalization needs one mean and std per input channel");
    for (double s : n.stddev)
      if (!(s > 0.0)) throw ConfigError("dataset.normalization std must be positive");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

void ExperimentConfig::override_seed(std::uint64_t seed) {
  train.seed = seed;
  arch.init_seed = seed;
  eval.seed = seed;
  bench.seed = seed;
}

ExperimentConfig parse_experiment_config(const json& j) {
  object_at(j, "config", {"arch", "train", "eval", "bench", "dataset", "output_dir"});
  ExperimentConfig c;
  try {
    if (j.contains("arch")) parse_arch(j.at("arch"), c.arch, c.dropout_mode);
    if (j.contains("train")) parse_train(j.at("train"), c);
    if (j.contains("eval")) parse_eval(j.at("eval"), c.eval);
    if (j.contains("bench")) parse_bench(j.at("bench"), c.bench);
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), c.dataset);
    read(j, "output_dir", "config", c.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.train.rate_train = c.rate_train.empty() ? 0.0 : c.rate_train.front();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j);
}

nlohmann::ordered_json to_json(const ArchConfig& a) {
  nlohmann::ordered_json j;
  j["family"] = to_string(a.family);
  j["depth_blocks"] = a.depth_blocks;
  j["widening_factor"] = a.widening_factor;
  j["base_channels"] = a.base_channels;
  j["first_stochastic_layer"] = a.first_stochastic_layer;
  j["num_classes"] = a.num_classes;
  j["input_channels"] = a.input_channels;
  j["stages"] = a.stages;
  j["init_seed"] = a.init_seed;
  return j;
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  DropoutMode unused = DropoutMode::spatial;
  parse_arch(j, a, unused);
  return a;
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["arch"] = to_json(c.arch);
  j["arch"]["dropout_mode"] = to_string(c.dropout_mode);
  auto& t = j["train"];
  t["epochs"] = c.train.epochs;
  t["lr_schedule"] = nlohmann::ordered_json::array();
  for (const auto& [e, lr] : c.train.schedule.milestones()) t["lr_schedule"].push_back({e, lr});
  t["momentum"] = c.train.momentum;
  t["weight_decay"] = c.train.weight_decay;
  t["batch_size"] = c.train.batch_size;
  t["augmentation"] = {{"pad_crop", c.train.augmentation.pad_crop},
                       {"horizontal_flip", c.train.augmentation.horizontal_flip}};
  t["rate_train"] = c.rate_train;
  t["optimizer"] = to_string(c.train.optimizer);
  t["dice_term"] = c.train.dice_term;
  t["seed"] = c.train.seed;
  auto& e = j["eval"];
  e["num_samples"] = c.eval.num_samples;
  e["rate_inf"] = c.eval.rate_inf;
  e["executors"] = to_json_list(c.eval.executors);
  e["include_clean"] = c.eval.include_clean;
  e["corruptions"]["kinds"] = nlohmann::ordered_json::array();
  for (auto k : c.eval.corruption_kinds) e["corruptions"]["kinds"].push_back(to_string(k));
  e["corruptions"]["levels"] = c.eval.corruption_levels;
  e["bins"] = c.eval.bins;
  e["seed"] = c.eval.seed;
  e["batch"] = c.eval.batch;
  e["maps"] = c.eval.maps;
  auto& b = j["bench"];
  b["warmup_iters"] = c.bench.warmup_iters;
  b["timed_iters"] = c.bench.timed_iters;
  b["executors"] = to_json_list(c.bench.executors);
  b["num_samples"] = c.bench.num_samples;
  b["batch"] = c.bench.batch;
  b["rate_inf"] = c.bench.rate_inf;
  b["seed"] = c.bench.seed;
  auto& d = j["dataset"];
  d["format"] = c.dataset.format == DatasetConfig::Format::cifar10 ? "cifar10" : "segmentation";
  d["train"] = c.dataset.train;
  d["test"] = c.dataset.test;
  d["classes"] = c.dataset.classes;
  d["train_limit"] = c.dataset.train_limit;
  d["test_limit"] = c.dataset.test_limit;
  d["image_size"] = c.dataset.image_size;
  if (!c.dataset.normalize)
    d["normalization"] = "none";
  else if (c.dataset.normalization)
    d["normalization"] = {{"mean", c.dataset.normalization->mean}, {"std", c.dataset.normalization->stddev}};
  else
    d["normalization"] = "dataset";
  j["output_dir"] = c.output_dir;
  return j;
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace smcdo
