#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "eval/corruption.hpp"
#include "eval/metrics.hpp"
#include "eval/report.hpp"
#include "support/test_support.hpp"
#include "tensor/error.hpp"

using namespace smcdo;
using namespace testing_support;

namespace {

// Two passes: for each bin, scan every sample and keep those whose
// confidence lies in (b/B, (b+1)/B] (bin 0 also takes everything <= 1/B).
double brute_force_ece(const std::vector<double>& conf, const std::vector<bool>& correct, std::size_t bins) {
  const double B = static_cast<double>(bins);
  double e = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = static_cast<double>(b) / B, hi = static_cast<double>(b + 1) / B;
    std::uint64_t n = 0, hits = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
      const bool in = b == 0 ? conf[i] <= hi : (conf[i] > lo && (conf[i] <= hi || b + 1 == bins));
      if (!in) continue;
      ++n;
      sum += conf[i];
      hits += correct[i] ? 1 : 0;
    }
    if (n == 0) continue;
    const double nb = static_cast<double>(n);
    e += nb / static_cast<double>(conf.size()) * std::abs(static_cast<double>(hits) / nb - sum / nb);
  }
  return e;
}

Tensor random_probs(std::size_t n, std::size_t k, std::mt19937_64& rng, double spread) {
  return softmax(random_tensor(Shape{n, k, 1, 1}, rng, -spread, spread));
}

std::vector<int> random_labels(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<int> l(n);
  for (int& v : l) v = static_cast<int>(rng() % k);
  return l;
}

Tensor smooth_images(std::size_t n, std::mt19937_64& rng) {
  Tensor t(Shape{n, 3, 32, 32});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const double fx = 0.1 + 0.5 * u(rng), fy = 0.1 + 0.5 * u(rng), ph = 6.0 * u(rng);
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x)
          t.at(i, c, y, x) = 0.5 + 0.35 * std::sin(fx * static_cast<double>(x) + fy * static_cast<double>(y) + ph);
    }
  return t;
}

double mean_abs_change(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.numel());
}

}  // namespace

TEST_CASE("ece examples") {
  const Tensor sure(Shape{3, 2, 1, 1}, {1, 0, 0, 1, 1, 0});
  CHECK(ece(sure, std::vector<int>{0, 1, 0}) == 0.0);

  const Tensor p(Shape{4, 2, 1, 1}, {0.8, 0.2, 0.8, 0.2, 0.8, 0.2, 0.8, 0.2});
  CHECK(std::abs(ece(p, std::vector<int>{0, 0, 1, 1}) - 0.3) <= 1e-15);

  std::mt19937_64 rng(1);
  const Tensor r = random_probs(50, 4, rng, 2.0);
  const auto labels = random_labels(50, 4, rng);
  double mean_conf = 0.0;
  for (std::size_t n = 0; n < 50; ++n) {
    double best = 0.0;
    for (std::size_t c = 0; c < 4; ++c) best = std::max(best, r.at(n, c, 0, 0));
    mean_conf += best;
  }
  mean_conf /= 50.0;
  CHECK(std::abs(ece(r, labels, 1) - std::abs(accuracy(r, labels) - mean_conf)) <= 1e-15);

  CHECK_THROWS_AS(ece(r, labels, 0), ArgumentError);
}

TEST_CASE("ece bin boundaries") {
  CHECK(ece_bin(0.0, 15) == 0);
  CHECK(ece_bin(1.0 / 15.0, 15) == 0);
  CHECK(ece_bin(std::nextafter(1.0 / 15.0, 1.0), 15) == 1);
  CHECK(ece_bin(2.0 / 15.0, 15) == 1);
  CHECK(ece_bin(1.0, 15) == 14);
  CHECK(ece_bin(0.5, 2) == 0);
  CHECK(ece_bin(0.75, 4) == 2);
  for (std::size_t b = 1; b <= 20; ++b)
    for (std::size_t k = 1; k < b; ++k) {
      const double edge = static_cast<double>(k) / static_cast<double>(b);
      CHECK(ece_bin(edge, b) == k - 1);
      CHECK(ece_bin(std::nextafter(edge, 2.0), b) == k);
    }
}

TEST_CASE("ece equals the brute-force oracle") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 200, k = 2 + rng() % 9, bins = 1 + rng() % 20;
    const Tensor p = random_probs(n, k, rng, 0.5 + static_cast<double>(rng() % 6));
    const auto labels = random_labels(n, k, rng);
    std::vector<double> conf(n);
    std::vector<bool> correct(n);
    const auto pred = predictions(p);
    for (std::size_t i = 0; i < n; ++i) {
      conf[i] = p.at(i, static_cast<std::size_t>(pred[i]), 0, 0);
      correct[i] = pred[i] == labels[i];
    }
    const double e = ece(p, labels, bins);
    CHECK(e == brute_force_ece(conf, correct, bins));
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
  }
}

TEST_CASE("ece is invariant under sample permutation") {
  std::mt19937_64 rng(3);
  const Tensor p = random_probs(64, 3, rng, 3.0);
  const auto labels = random_labels(64, 3, rng);
  std::vector<std::size_t> order(64);
  for (std::size_t i = 0; i < 64; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  Tensor q(p.shape());
  std::vector<int> ql(64);
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t c = 0; c < 3; ++c) q.at(i, c, 0, 0) = p.at(order[i], c, 0, 0);
    ql[i] = labels[order[i]];
  }
  CHECK(std::abs(ece(p, labels) - ece(q, ql)) <= 1e-15);
}

TEST_CASE("accuracy and nll") {
  const Tensor p(Shape{2, 3, 1, 1}, {0.7, 0.2, 0.1, 0.1, 0.1, 0.8});
  CHECK(accuracy(p, std::vector<int>{0, 2}) == 1.0);
  const Tensor tie(Shape{1, 3, 1, 1}, {0.4, 0.4, 0.2});
  CHECK(predictions(tie) == std::vector<int>{0});

  const Tensor uniform(Shape{3, 10, 1, 1}, 0.1);
  CHECK(std::abs(nll(uniform, std::vector<int>{1, 5, 9}) - std::log(10.0)) <= 1e-12);
  const Tensor zero(Shape{1, 2, 1, 1}, {1.0, 0.0});
  CHECK(nll(zero, std::vector<int>{1}) == -std::log(1e-12));

  std::mt19937_64 rng(4);
  const Tensor r = random_probs(20, 5, rng, 2.0);
  const auto labels = random_labels(20, 5, rng);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < 20; ++n) {
    sum -= std::log(r.at(n, static_cast<std::size_t>(labels[n]), 0, 0));
    std::size_t best = 0;
    for (std::size_t c = 1; c < 5; ++c)
      if (r.at(n, c, 0, 0) > r.at(n, best, 0, 0)) best = c;
    hits += static_cast<int>(best) == labels[n];
  }
  CHECK(nll(r, labels) == sum / 20.0);
  CHECK(accuracy(r, labels) == static_cast<double>(hits) / 20.0);
  CHECK(nll(r, labels) >= 0.0);

  // A strictly monotone map of each row keeps the arg-max.
  Tensor squashed = r;
  for (double& v : squashed.data()) v = std::pow(v, 3.0) + 0.1;
  CHECK(accuracy(squashed, labels) == accuracy(r, labels));
  CHECK_THROWS_AS(accuracy(r, std::vector<int>{0}), DimensionError);
}

TEST_CASE("dice examples") {
  const std::vector<int> a{1, 1, 0, 0}, b{1, 0, 1, 0}, none{0, 0, 0, 0}, other{0, 0, 1, 1};
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, other) == 0.0);
  CHECK(dice(a, b) == 0.5);
  CHECK(dice(b, a) == 0.5);
  CHECK(dice(none, none) == 1.0);
  CHECK_THROWS_AS(dice(a, std::vector<int>{1}), DimensionError);

  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> p(30), q(30);
    for (auto& v : p) v = static_cast<int>(rng() % 2);
    for (auto& v : q) v = static_cast<int>(rng() % 2);
    std::size_t inter = 0, sp = 0, sq = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      inter += p[i] && q[i];
      sp += static_cast<std::size_t>(p[i]);
      sq += static_cast<std::size_t>(q[i]);
    }
    const double expect = sp + sq == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(sp + sq);
    CHECK(dice(p, q) == expect);
    CHECK(dice(p, q) == dice(q, p));
  }
}

TEST_CASE("pixelwise ece") {
  const Tensor sure(Shape{1, 2, 2, 2}, {1, 0, 1, 0, 0, 1, 0, 1});
  CHECK(pixelwise_ece(sure, std::vector<int>{0, 1, 0, 1}) == 0.0);

  // 2x2 map, class-1 probabilities 0.9, 0.6, 0.3, 0.2; confidences 0.9, 0.6,
  // 0.7, 0.8 with truth 1, 0, 0, 1. Ten bins: 0.6 -> bin 5, 0.7 -> bin 6,
  // 0.8 -> bin 7, 0.9 -> bin 8. Correct: yes, no, yes, no.
  const Tensor map(Shape{1, 2, 2, 2}, {0.1, 0.4, 0.7, 0.8, 0.9, 0.6, 0.3, 0.2});
  const std::vector<int> truth{1, 0, 0, 1};
  const double hand = 0.25 * (std::abs(0.0 - 0.6) + std::abs(1.0 - 0.7) + std::abs(0.0 - 0.8) + std::abs(1.0 - 0.9));
  CHECK(std::abs(pixelwise_ece(map, truth, 10) - hand) <= 1e-15);

  std::mt19937_64 rng(6);
  const Tensor p = softmax(random_tensor(Shape{3, 2, 4, 5}, rng));
  std::vector<int> labels(60);
  for (auto& v : labels) v = static_cast<int>(rng() % 2);
  Tensor flat(Shape{60, 2, 1, 1});
  std::vector<int> flat_labels(60);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t q = 0; q < 20; ++q) {
      flat.at(n * 20 + q, 0, 0, 0) = p.plane(n, 0)[q];
      flat.at(n * 20 + q, 1, 0, 0) = p.plane(n, 1)[q];
      flat_labels[n * 20 + q] = labels[n * 20 + q];
    }
  CHECK(pixelwise_ece(p, labels) == ece(flat, flat_labels));
}

TEST_CASE("corruption severity tables") {
  const std::vector<std::vector<double>> table{{.04, .08, .12, .16, .20},
                                               {.5, 1, 1.5, 2, 2.5},
                                               {.05, .1, .15, .2, .3},
                                               {.85, .7, .55, .4, .3},
                                               {1.25, 1.5, 2, 3, 4}};
  for (int k = 0; k < 5; ++k)
    for (int l = 1; l <= 5; ++l) CHECK(corruption_severity(static_cast<CorruptionKind>(k), l) == table[k][l - 1]);
  CHECK_THROWS_AS(corruption_severity(CorruptionKind::contrast, 0), ArgumentError);
  CHECK_THROWS_AS(corruption_severity(CorruptionKind::contrast, 6), ArgumentError);
  CHECK(CorruptionSpec{CorruptionKind::pixelate, 3}.id() == "pixelate-3");
  CHECK(parse_corruption_kind("gaussian_blur") == CorruptionKind::gaussian_blur);
  CHECK_THROWS_AS(parse_corruption_kind("fog"), ConfigError);
}

TEST_CASE("gaussian noise has the table standard deviation") {
  const Tensor gray(Shape{1, 1, 1000, 1000}, 0.5);
  for (int level = 1; level <= 5; ++level) {
    const double sigma = corruption_severity(CorruptionKind::gaussian_noise, level);
    const Tensor noisy = add_gaussian_noise(gray, sigma, 1000 + static_cast<std::uint64_t>(level));
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < noisy.numel(); ++i) {
      const double d = noisy[i] - 0.5;
      sum += d;
      sq += d * d;
    }
    const double n = static_cast<double>(noisy.numel());
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    CHECK(std::abs(sd - sigma) <= 0.05 * sigma);
  }
}

TEST_CASE("brightness and contrast examples") {
  const Tensor black(Shape{2, 3, 4, 4}, 0.0);
  const Tensor lit = corrupt(black, {CorruptionKind::brightness, 1}, 0);
  for (double v : lit.data()) CHECK(v == 0.05);

  std::mt19937_64 rng(7);
  const Tensor img = random_tensor(Shape{2, 3, 8, 8}, rng, 0.0, 1.0);
  CHECK(max_abs_diff(scale_contrast(img, 1.0), img) <= 1e-15);
  auto variance = [](const Tensor& t) {
    double m = 0.0, s = 0.0;
    for (double v : t.data()) m += v;
    m /= static_cast<double>(t.numel());
    for (double v : t.data()) s += (v - m) * (v - m);
    return s / static_cast<double>(t.numel());
  };
  double prev = variance(img);
  for (int level = 1; level <= 5; ++level) {
    const double v = variance(corrupt(img, {CorruptionKind::contrast, level}, 0));
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("pixelate and blur") {
  const Tensor checker(Shape{1, 1, 4, 4}, {0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0});
  const Tensor flat = pixelate(checker, 4.0);
  for (double v : flat.data()) CHECK(v == 0.5);
  const Tensor half = pixelate(checker, 2.0);
  for (double v : half.data()) CHECK(v == 0.5);

  const Tensor constant(Shape{1, 2, 5, 5}, 0.3);
  CHECK(max_abs_diff(gaussian_blur(constant, 1.5), constant) <= 1e-15);
}

TEST_CASE("corruptions are deterministic, clipped and severity-monotone") {
  std::mt19937_64 rng(8);
  Tensor images = smooth_images(6, rng);
  const Tensor noise = random_tensor(images.shape(), rng, -0.1, 0.1);
  for (std::size_t i = 0; i < images.numel(); ++i) images[i] = std::clamp(images[i] + noise[i], 0.0, 1.0);
  for (int k = 0; k < 5; ++k) {
    const auto kind = static_cast<CorruptionKind>(k);
    const std::string kind_name = to_string(kind);
    CAPTURE(kind_name);
    double prev = 0.0;
    for (int level = 1; level <= 5; ++level) {
      const Tensor a = corrupt(images, {kind, level}, 99);
      CHECK(max_abs_diff(a, corrupt(images, {kind, level}, 99)) == 0.0);
      for (double v : a.data()) CHECK((v >= 0.0 && v <= 1.0));
      const double change = mean_abs_change(a, images);
      CHECK(change >= prev);
      prev = change;
    }
  }
  const Tensor n1 = corrupt(images, {CorruptionKind::gaussian_noise, 3}, 1);
  const Tensor n2 = corrupt(images, {CorruptionKind::gaussian_noise, 3}, 2);
  CHECK(max_abs_diff(n1, n2) > 0.0);
}

TEST_CASE("report rows and json objects carry identical values") {
  std::mt19937_64 rng(9);
  CalibrationReport r;
  r.condition = "mcdo:r0.30:gaussian_noise-4";
  r.kind = "gaussian_noise";
  r.level = 4;
  r.accuracy = 0.1 + 0.2;
  r.ece = 1.0 / 3.0;
  r.nll = 2.0 / 7.0;
  r.entropy = std::log(2.0);
  const std::string header = csv_header();
  CHECK(header == "condition,kind,level,accuracy,ece,nll,entropy,dice,pixelwise_ece");
  const std::string row = to_csv_row(r);
  CHECK(row.substr(row.size() - 2) == ",,");
  CHECK(from_csv_row(row) == r);
  const auto j = to_json(r);
  CHECK(j["dice"].is_null());
  CHECK(from_json(nlohmann::json::parse(j.dump())) == r);

  r.dice = 0.875;
  r.pixelwise_ece = 0.0123456789012345678;
  r.condition = "a,\"b\"";
  CHECK(from_csv_row(to_csv_row(r)) == r);
  CHECK(from_json(nlohmann::json::parse(to_json(r).dump())) == r);
}

TEST_CASE("score fills segmentation metrics only for maps") {
  std::mt19937_64 rng(10);
  const EnsembleOutput cls = aggregate({softmax(random_tensor(Shape{4, 3, 1, 1}, rng))});
  const CalibrationReport a = score(cls, std::vector<int>{0, 1, 2, 0}, 15, std::nullopt);
  CHECK(a.kind == "clean");
  CHECK(a.level == 0);
  CHECK_FALSE(a.dice.has_value());

  const EnsembleOutput seg = aggregate({softmax(random_tensor(Shape{2, 2, 3, 3}, rng))});
  std::vector<int> mask(18);
  for (auto& v : mask) v = static_cast<int>(rng() % 2);
  const CalibrationReport b = score(seg, mask, 15, CorruptionSpec{CorruptionKind::contrast, 2});
  CHECK(b.kind == "contrast");
  CHECK(b.level == 2);
  REQUIRE(b.dice.has_value());
  CHECK(*b.dice == mean_dice(seg.mean_probs, mask));
  CHECK(*b.pixelwise_ece == pixelwise_ece(seg.mean_probs, mask));
}
