#include "bench/cifar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "tensor/error.hpp"

namespace smcdo {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset parse_cifar10(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.empty() || bytes.size() % kCifarRecord != 0)
    throw DataError(origin + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                    std::to_string(kCifarRecord) + " (truncated file?)");
  const std::size_t n = bytes.size() / kCifarRecord;
  Dataset d;
  d.images = Tensor(Shape{n, 3, kCifarSide, kCifarSide});
  d.labels.resize(n);
  auto px = d.images.data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto rec = bytes.subspan(i * kCifarRecord, kCifarRecord);
    if (rec[0] > 9) throw DataError(origin + ": record " + std::to_string(i) + " has label " + std::to_string(rec[0]));
    d.labels[i] = rec[0];
    for (std::size_t j = 0; j < kCifarPixels; ++j) px[i * kCifarPixels + j] = rec[1 + j] / 255.0;
  }
  return d;
}

Dataset load_cifar10(const std::string& path) { return parse_cifar10(read_file(path), path); }

Dataset load_cifar10(std::span<const std::string> paths) {
  if (paths.empty()) throw ConfigError("no CIFAR-10 files given");
  std::vector<std::uint8_t> all;
  for (const auto& p : paths) {
    const auto b = read_file(p);
    if (b.empty() || b.size() % kCifarRecord != 0)
      throw DataError(p + ": size " + std::to_string(b.size()) + " is not a multiple of " +
                      std::to_string(kCifarRecord) + " (truncated file?)");
    all.insert(all.end(), b.begin(), b.end());
  }
  return parse_cifar10(all, paths.front());
}

std::vector<std::uint8_t> encode_cifar10(const Dataset& d) {
  const Shape s = d.images.shape();
  if (s.c != 3 || s.h != kCifarSide || s.w != kCifarSide)
    throw DimensionError("image", kCifarPixels, s.sample(), "encode_cifar10");
  std::vector<std::uint8_t> out(s.n * kCifarRecord);
  const auto px = d.images.data();
  for (std::size_t i = 0; i < s.n; ++i) {
    if (d.labels[i] < 0 || d.labels[i] > 9) throw ArgumentError("encode_cifar10: label outside 0..9");
    out[i * kCifarRecord] = static_cast<std::uint8_t>(d.labels[i]);
    for (std::size_t j = 0; j < kCifarPixels; ++j)
      out[i * kCifarRecord + 1 + j] =
          static_cast<std::uint8_t>(std::lround(std::clamp(px[i * kCifarPixels + j], 0.0, 1.0) * 255.0));
  }
  return out;
}

void write_cifar10(const std::string& path, const Dataset& d) {
  const auto bytes = encode_cifar10(d);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write '" + path + "'");
}

Dataset select_classes(const Dataset& d, std::span<const int> classes, std::size_t limit) {
  std::vector<std::size_t> keep;
  std::vector<int> relabel;
  for (std::size_t i = 0; i < d.size() && (limit == 0 || keep.size() < limit); ++i) {
    const auto it = std::find(classes.begin(), classes.end(), d.labels[i]);
    if (it == classes.end()) continue;
    keep.push_back(i);
    relabel.push_back(static_cast<int>(it - classes.begin()));
  }
  if (keep.empty()) throw DataError("no images of the selected classes");
  Dataset out = subset(d, keep);
  out.labels = std::move(relabel);
  return out;
}

Dataset synthetic_cifar(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  Dataset d;
  d.images = Tensor(Shape{count, 3, kCifarSide, kCifarSide});
  d.labels.resize(count);
  const double pi = std::numbers::pi;
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(rng() % 2);
    d.labels[i] = label;
    // The class sets the orientation of the signal grating (within +-40
    // degrees of horizontal or vertical); a second grating of random
    // orientation and comparable contrast acts as a distractor.
    const double theta = (label == 0 ? 0.0 : pi / 2) + (u(rng) - 0.5) * (80.0 / 180.0) * pi;
    const double phi = pi * u(rng);
    const double freq = 0.35 + 0.45 * u(rng), freq2 = 0.35 + 0.45 * u(rng);
    const double phase = 2 * pi * u(rng), phase2 = 2 * pi * u(rng);
    const double amp = 0.08 + 0.2 * u(rng), amp2 = 0.2 * u(rng);
    double tint[3], tint2[3], base[3];
    for (int c = 0; c < 3; ++c) {
      tint[c] = 0.4 + 0.6 * u(rng);
      tint2[c] = 0.4 + 0.6 * u(rng);
      base[c] = 0.25 + 0.5 * u(rng);
    }
    const double ct = std::cos(theta), st = std::sin(theta), cp = std::cos(phi), sp = std::sin(phi);
    for (std::size_t y = 0; y < kCifarSide; ++y)
      for (std::size_t x = 0; x < kCifarSide; ++x) {
        const double fx = static_cast<double>(x), fy = static_cast<double>(y);
        const double wave = std::sin(freq * (-st * fx + ct * fy) + phase);
        const double wave2 = std::sin(freq2 * (-sp * fx + cp * fy) + phase2);
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = base[c] + amp * tint[c] * wave + amp2 * tint2[c] * wave2 + noise(rng);
          // Quantize like a stored byte so that files and memory agree.
          d.images.at(i, c, y, x) = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        }
      }
  }
  return d;
}

}  // namespace smcdo
