#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "bench/cifar.hpp"
#include "bench/commands.hpp"
#include "bench/config.hpp"
#include "bench/netpbm.hpp"
#include "graph/executor.hpp"
#include "support/test_support.hpp"
#include "tensor/error.hpp"
#include "train/arch.hpp"

using namespace smcdo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = fs::temp_directory_path() / ("smcdo-" + tag + "-" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

int error_code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return 0;
}

// A small two-class CIFAR-format experiment on disk.
struct Fixture {
  TempDir dir{"exp"};
  std::string config;

  explicit Fixture(const std::string& eval_json) {
    write_cifar10(dir / "train.bin", synthetic_cifar(96, 1));
    write_cifar10(dir / "test.bin", synthetic_cifar(40, 2));
    config = dir / "config.json";
    write_text(config, R"({
      "arch": {"widening_factor": 1, "base_channels": 4, "num_classes": 2},
      "train": {"epochs": 1, "lr_schedule": [[1, 0.05]], "batch_size": 32, "rate_train": 0.2},
      "eval": )" + eval_json + R"(,
      "bench": {"warmup_iters": 1, "timed_iters": 10},
      "dataset": {"train": ")" + (dir / "train.bin") + R"(", "test": ")" + (dir / "test.bin") +
                           R"(", "classes": [0, 1]},
      "output_dir": ")" + (dir / "out") + R"("
    })");
  }

  CommandOptions options() const {
    CommandOptions o;
    o.config_path = config;
    return o;
  }
};

}  // namespace

TEST_CASE("cifar binary records round-trip") {
  Dataset d;
  d.images = Tensor(Shape{2, 3, 32, 32});
  for (std::size_t i = 0; i < d.images.numel(); ++i) d.images[i] = static_cast<double>(i % 256) / 255.0;
  d.labels = {3, 9};
  const auto bytes = encode_cifar10(d);
  REQUIRE(bytes.size() == 2 * kCifarRecord);
  CHECK(bytes[0] == 3);
  CHECK(bytes[kCifarRecord] == 9);
  CHECK(bytes[1] == 0);
  CHECK(bytes[2] == 1);
  const Dataset back = parse_cifar10(bytes);
  CHECK(back.labels == d.labels);
  CHECK(max_abs_diff(back.images, d.images) <= 1e-15);
  // Channel-planar: byte 1 + 1024 is channel 1, pixel (0,0) of image 0.
  CHECK(back.images.at(0, 1, 0, 0) == bytes[1 + 1024] / 255.0);

  std::vector<std::uint8_t> white(kCifarRecord, 255);
  white[0] = 0;
  for (double v : parse_cifar10(white).images.data()) CHECK(v == 1.0);

  CHECK_THROWS_AS(parse_cifar10(std::vector<std::uint8_t>(3072, 0)), DataError);
  CHECK_THROWS_AS(parse_cifar10(std::vector<std::uint8_t>{}), DataError);
  auto bad_label = bytes;
  bad_label[kCifarRecord] = 10;
  CHECK_THROWS_AS(parse_cifar10(bad_label), DataError);

  TempDir tmp("cifar");
  write_cifar10(tmp / "a.bin", d);
  CHECK(load_cifar10(tmp / "a.bin").labels == d.labels);
  const std::vector<std::string> twice{tmp / "a.bin", tmp / "a.bin"};
  CHECK(load_cifar10(twice).size() == 4);
  CHECK_THROWS_AS(load_cifar10(tmp / "missing.bin"), DataError);
}

TEST_CASE("class selection relabels in list order") {
  Dataset d;
  d.images = Tensor(Shape{5, 3, 32, 32});
  d.labels = {7, 2, 5, 2, 7};
  const std::vector<int> classes{7, 2};
  const Dataset s = select_classes(d, classes);
  CHECK(s.labels == std::vector<int>{0, 1, 1, 0});
  CHECK(select_classes(d, classes, 2).size() == 2);
  const std::vector<int> absent{4};
  CHECK_THROWS_AS(select_classes(d, absent), DataError);
}

TEST_CASE("synthetic stand-in is deterministic and byte exact") {
  const Dataset a = synthetic_cifar(20, 5), b = synthetic_cifar(20, 5);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  CHECK(parse_cifar10(encode_cifar10(a)).images == a.images);
  CHECK(synthetic_cifar(20, 6).images != a.images);
}

TEST_CASE("netpbm parsing") {
  const Image img = parse_netpbm(bytes_of(std::string("P5\n# comment\n2 # w\n1\n255\n") + "\x05\xff"));
  CHECK(img.width == 2);
  CHECK(img.height == 1);
  CHECK(img.channels == 1);
  CHECK(img.pixels == std::vector<std::uint8_t>{5, 255});

  const Image rgb{1, 2, 3, {1, 2, 3, 4, 5, 6}};
  CHECK(parse_netpbm(encode_netpbm(rgb)) == rgb);
  const auto enc = encode_netpbm(Image{2, 1, 1, {0, 9}});
  CHECK(std::string(enc.begin(), enc.begin() + 11) == "P5\n2 1\n255\n");

  CHECK_THROWS_AS(parse_netpbm(bytes_of("P2\n1 1\n255\n0")), DataError);
  CHECK_THROWS_AS(parse_netpbm(bytes_of("P5\nx 1\n255\n0")), DataError);
  CHECK_THROWS_AS(parse_netpbm(bytes_of("P5\n1 1\n65535\n00")), DataError);
  CHECK_THROWS_AS(parse_netpbm(bytes_of("P6\n2 2\n255\nabc")), DataError);
  CHECK_THROWS_AS(parse_netpbm(bytes_of("P5\n0 1\n255\n")), DataError);
}

TEST_CASE("nearest resize replicates blocks") {
  const Image checker{2, 2, 1, {0, 255, 255, 0}};
  const Image big = resize_nearest(checker, 4, 4);
  CHECK(big.pixels == std::vector<std::uint8_t>{0, 0, 255, 255, 0, 0, 255, 255, 255, 255, 0, 0, 255, 255, 0, 0});
  CHECK(resize_nearest(big, 2, 2) == checker);
}

TEST_CASE("segmentation pairs") {
  TempDir tmp("seg");
  write_netpbm(tmp / "a.ppm", Image{2, 2, 3, std::vector<std::uint8_t>(12, 200)});
  write_netpbm(tmp / "a.pgm", Image{2, 2, 1, {127, 128, 0, 255}});
  const Dataset d = load_segmentation_pairs(tmp.path.string(), 4);
  CHECK(d.task == Task::segmentation);
  CHECK(d.images.shape() == Shape{1, 3, 4, 4});
  CHECK(d.labels == std::vector<int>{0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1});
  CHECK(d.images.at(0, 2, 3, 3) == 200.0 / 255.0);

  write_netpbm(tmp / "b.ppm", Image{2, 2, 3, std::vector<std::uint8_t>(12, 0)});
  CHECK(error_code_of([&] { load_segmentation_pairs(tmp.path.string(), 4); }) == 3);
  write_text(tmp / "b.pgm", "P5\n2 2\n255\n");
  CHECK(error_code_of([&] { load_segmentation_pairs(tmp.path.string(), 4); }) == 3);
}

TEST_CASE("uncertainty maps scale [0, ln 2] to bytes") {
  const double ln2 = std::numbers::ln2;
  CHECK(entropy_to_gray(std::vector<double>{0.0, 0.0}) == std::vector<std::uint8_t>{0, 0});
  CHECK(entropy_to_gray(std::vector<double>{ln2}) == std::vector<std::uint8_t>{255});
  // 255 * h / ln2 = 127.5 -> 128 (half up), 63.75 -> 64, 10.2 -> 10, 254.49 -> 254
  const std::vector<double> mixed{0.5 * ln2, 0.25 * ln2, 10.2 / 255.0 * ln2, 254.49 / 255.0 * ln2};
  CHECK(entropy_to_gray(mixed) == std::vector<std::uint8_t>{128, 64, 10, 254});
  CHECK(entropy_to_gray(std::vector<double>{2.0}) == std::vector<std::uint8_t>{255});

  TempDir tmp("map");
  const Tensor map(Shape{2, 1, 2, 2}, {0, 0, 0, 0, ln2, ln2, ln2, ln2});
  emit_uncertainty_map(map, 1, tmp / "m.pgm");
  const Image img = read_netpbm(tmp / "m.pgm");
  CHECK(img.channels == 1);
  CHECK(img.pixels == std::vector<std::uint8_t>(4, 255));
}

TEST_CASE("config parsing fails closed") {
  const auto parse = [](const std::string& text) { return parse_experiment_config(nlohmann::json::parse(text)); };
  CHECK(parse("{}").eval.bins == 15);
  CHECK_THROWS_AS(parse(R"({"surprise": 1})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"train": {"epochs": 2, "epoch": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"eval": {"corruptions": {"kinds": ["fog"], "levels": [1]}}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"train": {"epochs": "two"}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"bench": {"executors": ["turbo"]}})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"arch": {"widening_factor": -1}})"), ConfigError);

  const auto c = parse(R"({"train": {"rate_train": 0.3, "lr_schedule": [[1, 0.1], [5, 0.01]]},
                           "eval": {"rate_inf": [0.1, 0.5], "executors": "vanilla"}})");
  CHECK(c.rate_train == std::vector<double>{0.3});
  CHECK(c.train.schedule.at(6) == 0.01);
  CHECK(c.eval.executors == std::vector<ExecutorKind>{ExecutorKind::vanilla});

  ExperimentConfig v = parse(R"({"dataset": {"train": "/definitely/not/here"}})");
  CHECK_THROWS_AS(v.validate(), ConfigError);
  v = parse(R"({"eval": {"rate_inf": []}})");
  CHECK_THROWS_AS(v.validate(), ConfigError);
  v = parse(R"({"bench": {"timed_iters": 9}})");
  CHECK_THROWS_AS(v.validate(), ConfigError);
  v = parse(R"({"arch": {"num_classes": 2}})");
  CHECK_THROWS_AS(v.validate(), ConfigError);

  // Serialization is a fixed point of parsing.
  const auto again = parse_experiment_config(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(again).dump() == to_json(c).dump());
}

TEST_CASE("grid shape and condition ids") {
  EvalConfig e;
  e.executors = {ExecutorKind::mcdo_branched};
  e.rate_inf = {0.1};
  e.include_clean = true;
  CHECK(build_grid(e, 1).size() == 1);

  e.rate_inf = {0.1, 0.3};
  e.include_clean = false;
  e.corruption_kinds = {CorruptionKind::contrast};
  e.corruption_levels = {4, 5};
  const auto cells = build_grid(e, 1);
  REQUIRE(cells.size() == 4);
  std::vector<Checkpoint> cks(1);
  cks[0].path = "ck/model-a.bin";
  std::set<std::string> ids;
  for (const auto& c : cells) ids.insert(condition_id(c, cks, e));
  CHECK(ids.size() == 4);
  CHECK(ids.count("model-a:mcdo_branched:ri0.30:m3:contrast-4") == 1);

  e.executors = {ExecutorKind::vanilla, ExecutorKind::mcdo_sequential};
  CHECK(build_grid(e, 2).size() == 2 * (2 + 4));
}

TEST_CASE("timing helpers") {
  CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
  CHECK(std::abs(quantile({0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100}, 0.1) - 10.0) <= 1e-12);
  int calls = 0;
  const TimingSummary t = time_calls([&] { ++calls; }, 2, 10);
  CHECK(calls == 12);
  CHECK(t.p10_ms <= t.median_ms);
  CHECK(t.median_ms <= t.p90_ms);
}

TEST_CASE("bench records") {
  ArchConfig arch;
  arch.base_channels = 4;
  const ModelGraph g = build_model(arch, DropoutSpec{DropoutMode::spatial, 0.5, 0.5});
  BenchConfig b;
  b.warmup_iters = 1;
  b.timed_iters = 10;
  b.executors = {ExecutorKind::mcdo_sequential, ExecutorKind::mcdo_branched, ExecutorKind::mcdo_branched_fused};
  const auto recs = bench_model(g, arch, b, 32);
  REQUIRE(recs.size() == 4);
  CHECK(recs[0].executor == "vanilla");
  CHECK(recs[0].overhead == 1.0);
  CHECK(recs[0].conv_macs == graph_conv_macs(g, Shape{1, 3, 32, 32}));
  CHECK(recs[1].conv_macs == 3 * recs[0].conv_macs);
  CHECK(recs[2].conv_macs < recs[1].conv_macs);
  CHECK(recs[3].conv_macs < recs[2].conv_macs);
  CHECK(*recs[1].reference_s == 2.8);
  CHECK_FALSE(recs[3].reference_s.has_value());
  for (const auto& r : recs) {
    CHECK(r.p10_ms <= r.median_ms);
    CHECK(r.median_ms <= r.p90_ms);
  }
}

TEST_CASE("sweep is resumable and byte stable") {
  Fixture f(R"({"num_samples": 2, "rate_inf": [0.1, 0.3], "include_clean": false,
                "corruptions": {"kinds": ["brightness"], "levels": [4, 5]}})");
  const auto opts = f.options();
  const auto cfg = resolve_config(opts);
  const auto ck = cmd_train(cfg, opts);
  REQUIRE(ck.size() == 1);
  CHECK(fs::exists(sidecar_path(ck[0])));

  const auto first = cmd_sweep(cfg, opts);
  CHECK(first.size() == 4);
  const std::string csv = read_all(f.dir / "out/results.csv");
  std::set<std::string> ids;
  for (const auto& r : first) ids.insert(r.condition);
  CHECK(ids.size() == 4);

  std::ostringstream log;
  auto logged = opts;
  logged.log = &log;
  const auto again = cmd_sweep(cfg, logged);
  CHECK(log.str().find("0 computed, 4 reused") != std::string::npos);
  CHECK(again == first);
  CHECK(read_all(f.dir / "out/results.csv") == csv);

  // Interrupted run: drop one cell; the resumed grid equals the full one.
  const fs::path cells = f.dir.path / "out" / "cells";
  fs::remove(fs::directory_iterator(cells)->path());
  std::ostringstream log2;
  logged.log = &log2;
  CHECK(cmd_sweep(cfg, logged) == first);
  CHECK(log2.str().find("1 computed, 3 reused") != std::string::npos);
  CHECK(read_all(f.dir / "out/results.csv") == csv);

  // Parallel workers produce the same rows.
  fs::remove_all(cells);
  auto threaded = opts;
  threaded.threads = 3;
  CHECK(cmd_sweep(cfg, threaded) == first);
  CHECK(read_all(f.dir / "out/results.csv") == csv);

  // Dual emission: each CSV row has a JSON line with identical values.
  std::ifstream rows(f.dir / "out/results.csv"), lines(f.dir / "out/results.jsonl");
  std::string row, line;
  std::getline(rows, row);
  std::size_t n = 0;
  while (std::getline(rows, row) && std::getline(lines, line)) {
    CHECK(from_csv_row(row) == from_json(nlohmann::json::parse(line)));
    ++n;
  }
  CHECK(n == 4);
}

TEST_CASE("eval of one clean cell and command exit codes") {
  Fixture f(R"({"num_samples": 2, "rate_inf": 0.2})");
  auto opts = f.options();
  std::ostringstream err;
  CHECK(run_command("train", opts, err) == 0);
  opts.checkpoints = {f.dir / "out/checkpoints/mini_wrn-k1-rt0.20-s0.bin"};
  const auto cfg = resolve_config(opts);
  const auto reports = cmd_eval(cfg, opts);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].kind == "clean");

  CHECK(run_command("eval", opts, err) == 0);
  CHECK(run_command("bench", opts, err) == 0);
  CHECK(fs::exists(f.dir / "out/bench.csv"));
  CHECK(run_command("corrupt-preview", opts, err) == 0);
  CHECK(read_netpbm(f.dir / "out/preview/contrast-5_0.ppm").channels == 3);
  CHECK(run_command("teleport", opts, err) == 2);

  auto missing = opts;
  missing.checkpoints = {f.dir / "nope.bin"};
  CHECK(run_command("eval", missing, err) == 3);
  auto no_config = opts;
  no_config.config_path = f.dir / "absent.json";
  CHECK(run_command("eval", no_config, err) == 2);
  write_text(f.dir / "unknown.json", R"({"arch": {"depth": 3}})");
  no_config.config_path = f.dir / "unknown.json";
  CHECK(run_command("train", no_config, err) == 2);

  // A truncated test file is a data error.
  write_bytes(f.dir / "test.bin", std::vector<std::uint8_t>(3072, 1));
  CHECK(run_command("eval", opts, err) == 3);
}

TEST_CASE("segmentation pipeline writes entropy maps") {
  TempDir tmp("segexp");
  fs::create_directories(tmp.path / "train");
  std::mt19937_64 rng(4);
  for (int i = 0; i < 6; ++i) {
    Image img{16, 16, 3, std::vector<std::uint8_t>(16 * 16 * 3)};
    Image mask{16, 16, 1, std::vector<std::uint8_t>(16 * 16)};
    const std::size_t cx = 4 + rng() % 8;
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        const bool fg = x >= cx - 3 && x <= cx + 3 && y >= 4 && y < 12;
        mask.pixels[y * 16 + x] = fg ? 255 : 0;
        for (int c = 0; c < 3; ++c)
          img.pixels[(y * 16 + x) * 3 + c] = static_cast<std::uint8_t>((fg ? 180 : 60) + rng() % 40);
      }
    write_netpbm((tmp.path / "train" / ("p" + std::to_string(i) + ".ppm")).string(), img);
    write_netpbm((tmp.path / "train" / ("p" + std::to_string(i) + ".pgm")).string(), mask);
  }
  write_text(tmp / "config.json", R"({
    "arch": {"family": "mini_segnet", "base_channels": 4, "num_classes": 2, "first_stochastic_layer": 3},
    "train": {"epochs": 1, "batch_size": 3, "optimizer": "adam", "lr_schedule": [[1, 0.01]]},
    "eval": {"num_samples": 2, "rate_inf": 0.2, "maps": 2},
    "dataset": {"format": "segmentation", "train": ")" + (tmp / "train") + R"(", "test": ")" + (tmp / "train") +
                                         R"(", "image_size": 16},
    "output_dir": ")" + (tmp / "out") + R"("
  })");
  CommandOptions opts;
  opts.config_path = tmp / "config.json";
  const auto cfg = resolve_config(opts);
  opts.checkpoints = cmd_train(cfg, opts);
  const auto reports = cmd_eval(cfg, opts);
  REQUIRE(reports.size() == 1);
  REQUIRE(reports[0].dice.has_value());
  CHECK(reports[0].pixelwise_ece.has_value());
  std::size_t maps = 0;
  for (const auto& e : fs::directory_iterator(tmp.path / "out" / "maps")) {
    const Image m = read_netpbm(e.path().string());
    CHECK(m.width == 16);
    CHECK(m.channels == 1);
    ++maps;
  }
  CHECK(maps == 2);
}
