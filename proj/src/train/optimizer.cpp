#include "train/optimizer.hpp"

#include <cmath>
#include <functional>

namespace smcdo {

namespace {

using ParamVisitor = std::function<void(std::size_t slot, std::span<double> w, std::span<const double> g)>;

void for_each_param(WeightStore& weights, const GradStore& grads, const ParamVisitor& fn) {
  if (grads.size() != weights.params.size())
    throw DimensionError("layers", weights.params.size(), grads.size(), "optimizer gradient store");
  std::size_t slot = 0;
  for (std::size_t i = 0; i < weights.params.size(); ++i) {
    auto visit = [&](std::span<double> w, const std::vector<double>& g) {
      if (g.empty()) {
        ++slot;
        return;
      }
      if (g.size() != w.size()) throw DimensionError("gradient length", w.size(), g.size(), "optimizer");
      fn(slot++, w, g);
    };
    if (auto* c = std::get_if<ConvParams>(&weights.params[i])) {
      visit(c->weight.data(), grads[i].weight);
      visit(c->bias, grads[i].bias);
    } else if (auto* b = std::get_if<BatchNormParams>(&weights.params[i])) {
      visit(b->gamma, grads[i].weight);
      visit(b->beta, grads[i].bias);
    } else if (auto* d = std::get_if<DenseParams>(&weights.params[i])) {
      visit(d->weight.data(), grads[i].weight);
      visit(d->bias, grads[i].bias);
    }
  }
}

std::vector<double>& state_for(std::vector<std::vector<double>>& state, std::size_t slot, std::size_t size) {
  if (state.size() <= slot) state.resize(slot + 1);
  if (state[slot].size() != size) state[slot].assign(size, 0.0);
  return state[slot];
}

}  // namespace

LrSchedule::LrSchedule(std::vector<std::pair<int, double>> milestones) : milestones_(std::move(milestones)) {
  if (milestones_.empty()) throw ConfigError("lr schedule: no milestones");
  if (milestones_.front().first != 1) throw ConfigError("lr schedule: first milestone must be at epoch 1");
  for (std::size_t i = 1; i < milestones_.size(); ++i)
    if (milestones_[i].first <= milestones_[i - 1].first)
      throw ConfigError("lr schedule: milestone epochs must be strictly increasing");
  for (const auto& m : milestones_)
    if (!(m.second > 0.0) || !std::isfinite(m.second)) throw ConfigError("lr schedule: learning rates must be positive");
}

double LrSchedule::at(int epoch) const {
  if (epoch < 1) throw ArgumentError("lr schedule: epochs are 1-based");
  double lr = milestones_.front().second;
  for (const auto& [e, rate] : milestones_) {
    if (e > epoch) break;
    lr = rate;
  }
  return lr;
}

LrSchedule LrSchedule::wide_resnet_cifar() {
  return LrSchedule({{1, 0.1}, {80, 0.01}, {120, 0.001}, {160, 0.0001}, {180, 0.0005}});
}

void Sgd::step(WeightStore& weights, const GradStore& grads, double lr) {
  const double shrink = 1.0 - lr * weight_decay_;
  for_each_param(weights, grads, [&](std::size_t slot, std::span<double> w, std::span<const double> g) {
    auto& v = state_for(velocity_, slot, w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      // Algebraically w - lr * (mu*v + g + wd*w); written so a zero-gradient
      // first step is exactly w * (1 - lr*wd).
      const double carried = momentum_ * v[i] + g[i];
      v[i] = carried + weight_decay_ * w[i];
      w[i] = w[i] * shrink - lr * carried;
    }
  });
}

void Adam::step(WeightStore& weights, const GradStore& grads, double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for_each_param(weights, grads, [&](std::size_t slot, std::span<double> w, std::span<const double> g) {
    auto& m = state_for(m_, slot, w.size());
    auto& v = state_for(v_, slot, w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + weight_decay_ * w[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  });
}

}  // namespace smcdo
