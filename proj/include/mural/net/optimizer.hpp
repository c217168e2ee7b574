#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mural/net/mlp.hpp"

namespace mural::net {

enum class OptimizerKind { sgd, adam };

/// SGD or Adam with L2 weight decay folded into the gradient.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double weight_decay = 0.0)
      : kind_(kind), lr_(learning_rate), wd_(weight_decay) {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("optimizer: learning_rate < 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("optimizer: weight_decay < 0");
  }

  static Optimizer sgd(double lr, double wd = 0.0) { return {OptimizerKind::sgd, lr, wd}; }
  static Optimizer adam(double lr, double wd = 0.0) { return {OptimizerKind::adam, lr, wd}; }

  OptimizerKind kind() const noexcept { return kind_; }
  double learning_rate() const noexcept { return lr_; }
  double weight_decay() const noexcept { return wd_; }
  std::size_t steps_taken() const noexcept { return t_; }

  void step(std::span<double> params, std::span<const double> grad) {
    if (grad.size() != params.size())
      throw std::invalid_argument("optimizer: gradient length " + std::to_string(grad.size()) +
                                  " != parameter count " + std::to_string(params.size()));
    for (std::size_t i = 0; i < grad.size(); ++i)
      if (!std::isfinite(grad[i]))
        throw std::invalid_argument("optimizer: non-finite gradient at index " +
                                    std::to_string(i));
    ++t_;
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i)
        params[i] -= lr_ * (grad[i] + wd_ * params[i]);
      return;
    }
    if (m_.size() != params.size()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    }
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i] + wd_ * params[i];
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * g;
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * g * g;
      params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + kEps);
    }
  }

  void step(MlpModel& model, std::span<const double> grad) { step(model.params, grad); }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  OptimizerKind kind_;
  double lr_;
  double wd_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace mural::net
