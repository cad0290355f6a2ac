#include "graph/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace smcdo {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void tensor(const std::vector<std::uint32_t>& dims, std::span<const double> values) {
    u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) u32(d);
    for (double v : values) f64(v);
  }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  void magic() {
    need(sizeof(kWeightMagic));
    if (std::memcmp(bytes_.data(), kWeightMagic, sizeof(kWeightMagic)) != 0)
      throw DataError("weight file: bad magic (expected SMCDO1)");
    pos_ += sizeof(kWeightMagic);
  }
  // Reads one tensor record whose extents must equal `dims`.
  void tensor(const std::vector<std::uint32_t>& dims, std::span<double> dst, const std::string& what) {
    const std::uint32_t rank = u32();
    if (rank != dims.size()) throw DataError("weight file: " + what + " rank " + std::to_string(rank) + " != " +
                                             std::to_string(dims.size()));
    for (std::size_t i = 0; i < rank; ++i) {
      const std::uint32_t d = u32();
      if (d != dims[i])
        throw DataError("weight file: " + what + " extent " + std::to_string(i) + " is " + std::to_string(d) +
                        ", model expects " + std::to_string(dims[i]));
    }
    for (double& v : dst) v = f64();
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("weight file: truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint32_t> dims4(const Shape& s) {
  return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
          static_cast<std::uint32_t>(s.w)};
}

std::vector<std::uint32_t> dims1(std::size_t n) { return {static_cast<std::uint32_t>(n)}; }

std::vector<std::uint32_t> dims2(std::size_t a, std::size_t b) {
  return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const ModelGraph& graph) {
  Writer w;
  w.out.insert(w.out.end(), std::begin(kWeightMagic), std::end(kWeightMagic));
  w.u32(static_cast<std::uint32_t>(graph.size()));
  const auto& params = graph.weights().params;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    w.u32(static_cast<std::uint32_t>(graph.layers()[i].kind));
    if (const auto* c = std::get_if<ConvParams>(&params[i])) {
      w.u32(2);
      w.tensor(dims4(c->weight.shape()), c->weight.data());
      w.tensor(dims1(c->bias.size()), c->bias);
    } else if (const auto* b = std::get_if<BatchNormParams>(&params[i])) {
      w.u32(5);
      for (const auto* v : {&b->gamma, &b->beta, &b->running_mean, &b->running_var}) w.tensor(dims1(v->size()), *v);
      const double extra[2] = {b->epsilon, b->momentum};
      w.tensor(dims1(2), extra);
    } else if (const auto* d = std::get_if<DenseParams>(&params[i])) {
      w.u32(2);
      w.tensor(dims2(d->out_features(), d->in_features()), d->weight.data());
      w.tensor(dims1(d->bias.size()), d->bias);
    } else {
      w.u32(0);
    }
  }
  return std::move(w.out);
}

void decode_weights(std::span<const std::uint8_t> bytes, ModelGraph& graph) {
  Reader r(bytes);
  r.magic();
  const std::uint32_t count = r.u32();
  if (count != graph.size())
    throw DataError("weight file: " + std::to_string(count) + " layers, model has " + std::to_string(graph.size()));
  // Decode into a copy so a failure leaves the model untouched.
  WeightStore store = graph.weights();
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const std::string what = "layer " + std::to_string(i);
    const std::uint32_t tag = r.u32();
    if (tag != static_cast<std::uint32_t>(graph.layers()[i].kind))
      throw DataError("weight file: " + what + " kind tag " + std::to_string(tag) + " does not match model (" +
                      to_string(graph.layers()[i].kind) + ")");
    const std::uint32_t tensors = r.u32();
    auto& slot = store.params[i];
    std::uint32_t expected = 0;
    if (std::holds_alternative<ConvParams>(slot) || std::holds_alternative<DenseParams>(slot)) expected = 2;
    if (std::holds_alternative<BatchNormParams>(slot)) expected = 5;
    if (tensors != expected)
      throw DataError("weight file: " + what + " has " + std::to_string(tensors) + " tensors, expected " +
                      std::to_string(expected));
    if (auto* c = std::get_if<ConvParams>(&slot)) {
      r.tensor(dims4(c->weight.shape()), c->weight.data(), what + " weight");
      r.tensor(dims1(c->bias.size()), c->bias, what + " bias");
    } else if (auto* b = std::get_if<BatchNormParams>(&slot)) {
      r.tensor(dims1(b->gamma.size()), b->gamma, what + " gamma");
      r.tensor(dims1(b->beta.size()), b->beta, what + " beta");
      r.tensor(dims1(b->running_mean.size()), b->running_mean, what + " running_mean");
      r.tensor(dims1(b->running_var.size()), b->running_var, what + " running_var");
      double extra[2];
      r.tensor(dims1(2), extra, what + " epsilon/momentum");
      b->epsilon = extra[0];
      b->momentum = extra[1];
      try {
        b->validate();
      } catch (const Error& e) {
        throw DataError("weight file: " + what + ": " + e.what());
      }
    } else if (auto* d = std::get_if<DenseParams>(&slot)) {
      r.tensor(dims2(d->out_features(), d->in_features()), d->weight.data(), what + " weight");
      r.tensor(dims1(d->bias.size()), d->bias, what + " bias");
    }
  }
  if (!r.done()) throw DataError("weight file: trailing bytes after last layer");
  graph.weights() = std::move(store);
}

void save_weights(const ModelGraph& graph, const std::string& path) {
  const auto bytes = encode_weights(graph);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing '" + path + "'");
}

void load_weights(const std::string& path, ModelGraph& graph) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open weight file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  decode_weights(bytes, graph);
}

}  // namespace smcdo
