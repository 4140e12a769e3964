#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "stcast/model.hpp"

namespace stcast::nn {

// Bias-corrected ADAM with one (m, v) pair per model parameter. The step
// counter is advanced once per minibatch by `begin_step`, so several disjoint
// parameter groups can be updated within the same step.
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  Adam() = default;
  explicit Adam(const Model& model) {
    for (const auto& p : model.params) {
      m.emplace_back(p.value.shape);
      v.emplace_back(p.value.shape);
    }
  }

  void begin_step() { ++step; }

  // Updates `target` in place with gradient `grad` for parameter slot `idx`.
  void update(std::size_t idx, std::span<double> target, std::span<const double> grad, double lr) {
    auto& mi = m[idx].data;
    auto& vi = v[idx].data;
    const double t = static_cast<double>(step);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double g = grad[i];
      mi[i] = beta1 * mi[i] + (1.0 - beta1) * g;
      vi[i] = beta2 * vi[i] + (1.0 - beta2) * g * g;
      const double mhat = mi[i] / c1;
      const double vhat = vi[i] / c2;
      target[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }

  void update_all(Model& model, double lr) {
    for (std::size_t i = 0; i < model.params.size(); ++i)
      update(i, model.params[i].value.data, model.params[i].grad.data, lr);
  }

  bool operator==(const Adam&) const = default;
};

}  // namespace stcast::nn
