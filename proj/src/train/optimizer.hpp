#pragma once

#include <utility>
#include <vector>

#include "graph/model_graph.hpp"
#include "train/training_pass.hpp"

namespace smcdo {

/// Piecewise-constant learning rate. Epochs are 1-based; the rate of the last
/// milestone at or before an epoch applies.
class LrSchedule {
 public:
  LrSchedule() = default;
  explicit LrSchedule(std::vector<std::pair<int, double>> milestones);

  double at(int epoch) const;
  const std::vector<std::pair<int, double>>& milestones() const noexcept { return milestones_; }

  /// Epochs 1/80/120/160/180 at 0.1/0.01/0.001/0.0001/0.0005.
  static LrSchedule wide_resnet_cifar();

 private:
  std::vector<std::pair<int, double>> milestones_{{1, 0.1}};
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(WeightStore& weights, const GradStore& grads, double lr) = 0;
};

/// SGD with momentum and L2 weight decay folded into the velocity:
/// v <- mu*v + g + wd*w; w <- w - lr*v.
class Sgd final : public Optimizer {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(WeightStore& weights, const GradStore& grads, double lr) override;

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

class Adam final : public Optimizer {
 public:
  Adam(double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(WeightStore& weights, const GradStore& grads, double lr) override;

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace smcdo
