#include "bench/netpbm.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>

#include "tensor/error.hpp"

namespace smcdo {

namespace {

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

struct HeaderReader {
  std::span<const std::uint8_t> bytes;
  const std::string& origin;
  std::size_t pos = 0;

  void skip_blank() {
    while (pos < bytes.size()) {
      if (is_space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_blank();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1u << 20) throw DataError(origin + ": " + what + " too large");
      ++pos;
    }
    if (pos == start) throw DataError(origin + ": malformed header, expected " + what);
    return v;
  }
};

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Image parse_netpbm(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw DataError(origin + ": not a binary PGM/PPM (P5/P6)");
  HeaderReader r{bytes, origin, 2};
  Image img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  img.width = r.number("width");
  img.height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (img.width == 0 || img.height == 0) throw DataError(origin + ": empty image");
  if (maxval != 255) throw DataError(origin + ": maxval " + std::to_string(maxval) + " unsupported (need 255)");
  // Exactly one whitespace byte separates the header from the raster.
  if (r.pos >= bytes.size() || !is_space(bytes[r.pos])) throw DataError(origin + ": malformed header end");
  ++r.pos;
  const std::size_t need = img.width * img.height * img.channels;
  if (bytes.size() - r.pos < need)
    throw DataError(origin + ": raster truncated (" + std::to_string(bytes.size() - r.pos) + " of " +
                    std::to_string(need) + " bytes)");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + need));
  return img;
}

Image read_netpbm(const std::string& path) { return parse_netpbm(read_file(path), path); }

std::vector<std::uint8_t> encode_netpbm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ArgumentError("encode_netpbm: channels must be 1 or 3");
  if (img.pixels.size() != img.width * img.height * img.channels)
    throw DimensionError("pixels", img.width * img.height * img.channels, img.pixels.size(), "encode_netpbm");
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

void write_netpbm(const std::string& path, const Image& img) {
  const auto bytes = encode_netpbm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write '" + path + "'");
}

Image resize_nearest(const Image& img, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ArgumentError("resize_nearest: empty target");
  Image out{width, height, img.channels, std::vector<std::uint8_t>(width * height * img.channels)};
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * img.height / height;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = x * img.width / width;
      for (std::size_t c = 0; c < img.channels; ++c)
        out.pixels[(y * width + x) * img.channels + c] = img.pixels[(sy * img.width + sx) * img.channels + c];
    }
  }
  return out;
}

Tensor image_to_tensor(const Image& img) {
  Tensor t(Shape{1, img.channels, img.height, img.width});
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        t.at(0, c, y, x) = img.pixels[(y * img.width + x) * img.channels + c] / 255.0;
  return t;
}

Image tensor_to_image(const Tensor& t, std::size_t index) {
  const Shape s = t.shape();
  if (s.c != 1 && s.c != 3) throw ArgumentError("tensor_to_image: channels must be 1 or 3");
  Image img{s.w, s.h, s.c, std::vector<std::uint8_t>(s.sample())};
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x)
        img.pixels[(y * s.w + x) * s.c + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(t.at(index, c, y, x), 0.0, 1.0) * 255.0));
  return img;
}

Dataset load_segmentation_pairs(const std::string& dir, std::size_t size) {
  namespace fs = std::filesystem;
  if (size == 0) throw ConfigError("segmentation image size must be positive");
  if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
  std::map<std::string, std::pair<fs::path, fs::path>> pairs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".ppm") pairs[entry.path().stem().string()].first = entry.path();
    if (ext == ".pgm") pairs[entry.path().stem().string()].second = entry.path();
  }
  if (pairs.empty()) throw DataError("no PPM/PGM pairs in '" + dir + "'");
  for (const auto& [name, p] : pairs)
    if (p.first.empty() || p.second.empty())
      throw DataError("unpaired file '" + name + (p.first.empty() ? ".pgm'" : ".ppm'") + " in '" + dir + "'");

  Dataset d;
  d.task = Task::segmentation;
  d.images = Tensor(Shape{pairs.size(), 3, size, size});
  d.labels.reserve(pairs.size() * size * size);
  std::size_t i = 0;
  for (const auto& [name, p] : pairs) {
    const Image img = read_netpbm(p.first.string());
    const Image mask = read_netpbm(p.second.string());
    if (img.channels != 3) throw DataError(p.first.string() + ": expected a PPM (P6) image");
    if (mask.channels != 1) throw DataError(p.second.string() + ": expected a PGM (P5) mask");
    const Tensor t = image_to_tensor(resize_nearest(img, size, size));
    std::copy(t.data().begin(), t.data().end(), d.images.data().begin() + static_cast<std::ptrdiff_t>(i * t.numel()));
    for (std::uint8_t v : resize_nearest(mask, size, size).pixels) d.labels.push_back(v >= 128 ? 1 : 0);
    ++i;
  }
  return d;
}

std::vector<std::uint8_t> entropy_to_gray(std::span<const double> entropy) {
  std::vector<std::uint8_t> out(entropy.size());
  for (std::size_t i = 0; i < entropy.size(); ++i) {
    if (!std::isfinite(entropy[i])) throw NumericError("entropy map contains a non-finite value");
    const double scaled = std::floor(255.0 * entropy[i] / std::numbers::ln2 + 0.5);
    out[i] = static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
  }
  return out;
}

void emit_uncertainty_map(const Tensor& entropy, std::size_t index, const std::string& path) {
  const Shape s = entropy.shape();
  if (s.c != 1) throw DimensionError("channels", 1, s.c, "emit_uncertainty_map");
  write_netpbm(path, Image{s.w, s.h, 1, entropy_to_gray(entropy.plane(index, 0))});
}

}  // namespace smcdo
