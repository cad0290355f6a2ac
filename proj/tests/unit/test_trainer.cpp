#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>

#include "graph/executor.hpp"
#include "support/test_support.hpp"
#include "tensor/error.hpp"
#include "train/arch.hpp"
#include "train/augment.hpp"
#include "train/loss.hpp"
#include "train/optimizer.hpp"
#include "train/trainer.hpp"
#include "train/training_pass.hpp"

using namespace smcdo;
using namespace testing_support;

namespace {

std::size_t conv_weight_count(const ModelGraph& g) {
  std::size_t n = 0;
  for (const auto& p : g.weights().params)
    if (const auto* c = std::get_if<ConvParams>(&p)) n += c->weight.numel();
  return n;
}

// Two Gaussian blobs in 2-D, separated along the diagonal.
Dataset separable_points(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 0.3);
  Dataset d;
  d.images = Tensor(Shape{n, 2, 1, 1});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double centre = label ? 1.5 : -1.5;
    d.images.at(i, 0, 0, 0) = centre + noise(rng);
    d.images.at(i, 1, 0, 0) = centre + noise(rng);
    d.labels[i] = label;
  }
  return d;
}

ModelGraph linear_model(std::mt19937_64& rng) {
  std::vector<LayerSpec> layers{{LayerKind::dense}, {LayerKind::softmax}};
  auto store = std::make_shared<WeightStore>();
  DenseParams d;
  d.weight = random_tensor(Shape{2, 2, 1, 1}, rng, -0.1, 0.1);
  d.bias = {0.0, 0.0};
  store->params = {d, std::monostate{}};
  return ModelGraph(layers, store, DropoutSpec{});
}

Dataset tiny_images(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  Dataset d;
  d.images = random_tensor(Shape{n, 3, 16, 16}, rng, 0.0, 1.0);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = static_cast<int>(i % classes);
  return d;
}

}  // namespace

TEST_CASE("mini_wrn structure") {
  ArchConfig a;
  a.first_stochastic_layer = 3;
  const ModelGraph g = build_mini_wrn(a, DropoutSpec{});
  CHECK_NOTHROW(g.validate());
  CHECK(conv_layer_count(a) == 7);
  // Convs 3..6 each get a site.
  CHECK(g.dropout_site_count() == 4);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.layers()[i].kind == LayerKind::dropout_site) CHECK(g.layers()[i + 1].kind == LayerKind::conv);
  CHECK(g.output_shape(Shape{2, 3, 32, 32}) == Shape{2, 10, 1, 1});

  ArchConfig none = a;
  none.first_stochastic_layer = conv_layer_count(a);
  const ModelGraph plain = build_mini_wrn(none, DropoutSpec{});
  CHECK(plain.dropout_site_count() == 0);
  CHECK_THROWS_AS(split_at(plain), StateError);

  ArchConfig bad = a;
  bad.widening_factor = 0;
  CHECK_THROWS_AS(build_mini_wrn(bad, DropoutSpec{}), ConfigError);
  CHECK_THROWS_AS(parse_arch_family("enet"), ConfigError);
}

TEST_CASE("parameter count grows with the square of the widening factor") {
  ArchConfig k1;
  ArchConfig k3 = k1;
  k3.widening_factor = 3;
  const double ratio = static_cast<double>(conv_weight_count(build_mini_wrn(k3, {}))) /
                       static_cast<double>(conv_weight_count(build_mini_wrn(k1, {})));
  CHECK(ratio == doctest::Approx(9.0).epsilon(0.1));
}

TEST_CASE("mini_segnet structure") {
  ArchConfig a;
  a.family = ArchFamily::mini_segnet;
  a.num_classes = 2;
  a.first_stochastic_layer = 3;
  DropoutSpec spec;
  spec.rate_inf = 0.3;
  const ModelGraph g = build_mini_segnet(a, spec);
  CHECK(g.output_shape(Shape{2, 3, 16, 20}) == Shape{2, 2, 16, 20});
  const std::size_t first = *g.first_stochastic_index();
  std::size_t upsample_at = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.layers()[i].kind == LayerKind::upsample) {
      upsample_at = i;
      break;
    }
  CHECK(first > upsample_at);

  std::mt19937_64 rng(1);
  const Tensor probs = run_mcdo(g, random_tensor(Shape{2, 3, 8, 8}, rng, 0.0, 1.0), 2, 3).mean_probs;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t p = 0; p < 64; ++p) CHECK(std::abs(probs.plane(n, 0)[p] + probs.plane(n, 1)[p] - 1.0) <= 1e-9);

  ArchConfig early = a;
  early.first_stochastic_layer = 1;
  CHECK_THROWS_AS(build_mini_segnet(early, spec), ConfigError);
}

TEST_CASE("cross entropy examples") {
  const Tensor onehot(Shape{2, 3, 1, 1}, {1, 0, 0, 0, 0, 1});
  const std::vector<int> labels{0, 2};
  CHECK(cross_entropy_loss(onehot, labels).value == 0.0);

  const Tensor uniform(Shape{1, 10, 1, 1}, 0.1);
  CHECK(std::abs(cross_entropy_loss(uniform, std::vector<int>{4}).value - std::log(10.0)) <= 1e-12);

  CHECK_THROWS_AS(cross_entropy_loss(onehot, std::vector<int>{0, 3}), ArgumentError);
  CHECK_THROWS_AS(cross_entropy_loss(onehot, std::vector<int>{0}), DimensionError);
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    Tensor probs = random_tensor(Shape{2, 3, 2, 2}, rng, 0.05, 1.0);
    std::vector<int> labels(8);
    for (int& l : labels) l = static_cast<int>(rng() % 3);
    const LossResult ce = cross_entropy_loss(probs, labels);
    auto ce_loss = [&] { return cross_entropy_loss(probs, labels).value; };
    CHECK(max_relative_error(ce.grad.data(), numeric_gradient(probs.data(), ce_loss)) <= 1e-4);

    Tensor two = random_tensor(Shape{2, 2, 3, 3}, rng, 0.05, 1.0);
    std::vector<int> mask(18);
    for (int& m : mask) m = static_cast<int>(rng() % 2);
    const LossResult dice = dice_loss(two, mask);
    auto dice_value = [&] { return dice_loss(two, mask).value; };
    CHECK(max_relative_error(dice.grad.data(), numeric_gradient(two.data(), dice_value)) <= 1e-4);
  }
}

TEST_CASE("dice loss of a perfect prediction is zero") {
  const Tensor p(Shape{1, 2, 1, 3}, {0, 1, 0, 1, 0, 1});
  CHECK(dice_loss(p, std::vector<int>{1, 0, 1}).value == 0.0);
}

TEST_CASE("whole-graph backward matches finite differences") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    ToyModel toy = random_toy_model(rng, 0.0);
    DropoutSpec s = toy.graph.dropout();
    s.rate_train = 0.3;
    if (t % 4 == 3) s.mode = DropoutMode::element;
    toy.graph.set_dropout(s);
    Shape in = toy.input;
    in.n = 3;
    Tensor x = random_tensor(in, rng);
    const std::size_t classes = toy.graph.output_shape(in).c;
    std::vector<int> labels(3);
    for (int& l : labels) l = static_cast<int>(rng() % classes);

    TrainingPass pass(toy.graph);
    pass.set_want_input_grad(true);
    auto loss = [&] {
      TrainingPass fresh(toy.graph);
      return cross_entropy_loss(fresh.forward(x, 77), labels).value;
    };
    const Tensor probs = pass.forward(x, 77);
    const GradStore grads = pass.backward(cross_entropy_loss(probs, labels).grad);
    CHECK(max_relative_error(pass.input_grad().data(), numeric_gradient(x.data(), loss)) <= 1e-4);

    auto& params = toy.graph.weights().params;
    for (std::size_t i = 0; i < params.size(); ++i) {
      CAPTURE(i);
      if (auto* c = std::get_if<ConvParams>(&params[i])) {
        CHECK(max_relative_error(grads[i].weight, numeric_gradient(c->weight.data(), loss)) <= 1e-4);
        CHECK(max_relative_error(grads[i].bias, numeric_gradient(c->bias, loss)) <= 1e-4);
      } else if (auto* b = std::get_if<BatchNormParams>(&params[i])) {
        CHECK(max_relative_error(grads[i].weight, numeric_gradient(b->gamma, loss)) <= 1e-4);
        CHECK(max_relative_error(grads[i].bias, numeric_gradient(b->beta, loss)) <= 1e-4);
      } else if (auto* d = std::get_if<DenseParams>(&params[i])) {
        CHECK(max_relative_error(grads[i].weight, numeric_gradient(d->weight.data(), loss)) <= 1e-4);
        CHECK(max_relative_error(grads[i].bias, numeric_gradient(d->bias, loss)) <= 1e-4);
      }
    }
  }
}

TEST_CASE("learning rate schedule") {
  const LrSchedule s = LrSchedule::wide_resnet_cifar();
  CHECK(s.at(1) == 0.1);
  CHECK(s.at(80) == 0.01);
  CHECK(s.at(120) == 0.001);
  CHECK(s.at(79) == 0.1);
  CHECK(s.at(160) == 0.0001);
  CHECK(s.at(200) == 0.0005);
  for (int e = 1; e <= 200; ++e) {
    double expect = 0.0;
    for (const auto& [epoch, lr] : s.milestones())
      if (epoch <= e) expect = lr;
    CHECK(s.at(e) == expect);
  }
  CHECK_THROWS_AS(LrSchedule({{2, 0.1}}), ConfigError);
  CHECK_THROWS_AS(LrSchedule({{1, 0.1}, {5, 0.01}, {5, 0.001}}), ConfigError);
  CHECK_THROWS_AS(LrSchedule(std::vector<std::pair<int, double>>{}), ConfigError);
}

TEST_CASE("zero-gradient SGD step shrinks weights by exactly (1 - lr*wd)") {
  std::mt19937_64 rng(4);
  ToyModel toy = random_toy_model(rng, 0.0);
  const WeightStore before = toy.graph.weights();
  GradStore zero(before.params.size());
  for (std::size_t i = 0; i < before.params.size(); ++i) {
    if (const auto* c = std::get_if<ConvParams>(&before.params[i])) {
      zero[i].weight.assign(c->weight.numel(), 0.0);
      zero[i].bias.assign(c->bias.size(), 0.0);
    }
  }
  const double lr = 0.1, wd = 5e-4;
  Sgd sgd(0.9, wd);
  sgd.step(toy.graph.weights(), zero, lr);
  for (std::size_t i = 0; i < before.params.size(); ++i)
    if (const auto* c = std::get_if<ConvParams>(&before.params[i])) {
      const auto& after = toy.graph.weights().conv(i);
      for (std::size_t k = 0; k < c->weight.numel(); ++k) CHECK(after.weight[k] == c->weight[k] * (1.0 - lr * wd));
    }
}

TEST_CASE("augmentation") {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor(Shape{4, 3, 6, 6}, rng);
  AugmentConfig off{0, false};
  CHECK(max_abs_diff(augment(x, off, rng), x) == 0.0);
  CHECK(max_abs_diff(flip_horizontal(flip_horizontal(x)), x) == 0.0);
  const Tensor f = flip_horizontal(x);
  CHECK(f.at(0, 1, 2, 0) == x.at(0, 1, 2, 5));

  // Crop by the maximal offset shifts content and zero-fills.
  Tensor shifted = x;
  apply_augment(shifted, 0, AugmentDraw{4, 4, false}, 2);
  CHECK(shifted.at(0, 0, 0, 0) == x.at(0, 0, 2, 2));
  CHECK(shifted.at(0, 0, 5, 5) == 0.0);

  std::vector<int> labels(4 * 36);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  Tensor marked(Shape{4, 1, 6, 6});
  for (std::size_t i = 0; i < labels.size(); ++i) marked[i] = labels[i] + 1.0;
  std::mt19937_64 seg_rng(9);
  const Tensor out = augment(marked, labels, AugmentConfig{2, true}, seg_rng);
  for (std::size_t i = 0; i < labels.size(); ++i) CHECK(out[i] == (out[i] == 0.0 ? 0.0 : labels[i] + 1.0));
}

TEST_CASE("crop offsets are uniform") {
  const AugmentConfig cfg{4, false};
  const std::size_t side = 2 * cfg.pad_crop + 1;
  std::vector<double> counts(side * side, 0.0);
  std::mt19937_64 rng(6);
  const std::size_t draws = 10000;
  for (std::size_t i = 0; i < draws; ++i) {
    const AugmentDraw d = draw_augment(cfg, rng);
    counts[d.dy * side + d.dx] += 1.0;
  }
  const double expected = static_cast<double>(draws) / static_cast<double>(counts.size());
  double stat = 0.0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  CHECK(boost::math::cdf(boost::math::complement(dist, stat)) > 0.01);
}

TEST_CASE("linear model reaches full train accuracy on separable data") {
  std::mt19937_64 rng(7);
  const Dataset data = separable_points(200, rng);
  ModelGraph g = linear_model(rng);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.augmentation = {0, false};
  cfg.rate_train = 0.0;
  cfg.weight_decay = 0.0;
  const TrainHistory h = train(g, data, &data, cfg);
  REQUIRE(h.epochs.size() == 20);
  CHECK(vanilla_accuracy(g, data) == 1.0);
  CHECK(h.epochs.back().val_accuracy == std::optional<double>(1.0));
}

TEST_CASE("training is deterministic and follows the schedule") {
  std::mt19937_64 rng(8);
  const Dataset data = tiny_images(24, 3, rng);
  ArchConfig a;
  a.num_classes = 3;
  a.stages = 2;
  a.first_stochastic_layer = 2;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.schedule = LrSchedule({{1, 0.05}, {3, 0.01}});
  cfg.seed = 42;

  ModelGraph g1 = build_mini_wrn(a, {});
  ModelGraph g2 = build_mini_wrn(a, {});
  const TrainHistory h1 = train(g1, data, nullptr, cfg);
  const TrainHistory h2 = train(g2, data, nullptr, cfg);
  CHECK(g1.weights() == g2.weights());
  REQUIRE(h1.epochs.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(h1.epochs[e].lr == cfg.schedule.at(static_cast<int>(e + 1)));
    CHECK(h1.epochs[e].train_loss == h2.epochs[e].train_loss);
    CHECK_FALSE(h1.epochs[e].val_accuracy.has_value());
  }
  CHECK(g1.dropout().rate_train == cfg.rate_train);

  ModelGraph g3 = build_mini_wrn(a, {});
  cfg.seed = 43;
  train(g3, data, nullptr, cfg);
  CHECK_FALSE(g3.weights() == g1.weights());
}

TEST_CASE("non-finite loss aborts with the epoch and batch") {
  std::mt19937_64 rng(9);
  Dataset data = tiny_images(8, 2, rng);
  data.images[5] = std::nan("");
  ArchConfig a;
  a.num_classes = 2;
  a.stages = 1;
  ModelGraph g = build_mini_wrn(a, {});
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.augmentation = {0, false};
  try {
    train(g, data, nullptr, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

TEST_CASE("segmentation training runs with CE plus dice") {
  std::mt19937_64 rng(10);
  Dataset d;
  d.task = Task::segmentation;
  d.images = random_tensor(Shape{6, 3, 8, 8}, rng, 0.0, 1.0);
  d.labels.resize(6 * 64);
  for (std::size_t i = 0; i < d.labels.size(); ++i) d.labels[i] = d.images[i] > 0.5 ? 1 : 0;
  ArchConfig a;
  a.family = ArchFamily::mini_segnet;
  a.num_classes = 2;
  a.base_channels = 4;
  a.first_stochastic_layer = 3;
  ModelGraph g = build_mini_segnet(a, {});
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  cfg.optimizer = OptimizerKind::adam;
  cfg.schedule = LrSchedule({{1, 0.01}});
  const TrainHistory h = train(g, d, &d, cfg);
  CHECK(h.epochs.size() == 2);
  CHECK(std::isfinite(h.epochs.back().train_loss));
  CHECK(h.epochs.back().val_accuracy.has_value());
}
