#pragma once

// Conditional normalized maximum likelihood by brute force: refit a model on
// the dataset augmented with the query under each candidate label, then
// normalize the two likelihoods the refit models give their own label.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mural/net/mlp.hpp"
#include "mural/net/optimizer.hpp"
#include "mural/nml/dataset.hpp"

namespace mural::nml {

struct CnmlPrediction {
  double p_label0 = 0.5;
  double p_label1 = 0.5;
  double raw_likelihood0 = 0.5;  // p_{theta_0}(y = 0 | x)
  double raw_likelihood1 = 0.5;  // p_{theta_1}(y = 1 | x)
  std::size_t steps_used = 0;
  bool converged = true;
};

inline CnmlPrediction normalize_likelihoods(double raw0, double raw1) {
  CnmlPrediction p;
  p.raw_likelihood0 = raw0;
  p.raw_likelihood1 = raw1;
  const double z = raw0 + raw1;
  p.p_label1 = z > 0.0 ? raw1 / z : 0.5;
  p.p_label0 = 1.0 - p.p_label1;
  return p;
}

struct ConvergenceCriteria {
  std::size_t max_steps = 5000;
  double tol = 1e-4;  // on the full-batch gradient norm of the mean loss
  double learning_rate = 1e-2;
  std::uint64_t init_seed = 0;
};

struct FitResult {
  net::MlpModel model;
  std::size_t steps = 0;
  bool converged = false;
};

/// Full-batch Adam on the mean loss until the gradient norm drops below tol.
inline FitResult fit_to_convergence(net::MlpModel model, std::span<const net::Sample> batch,
                                    const ConvergenceCriteria& c) {
  net::Optimizer adam = net::Optimizer::adam(c.learning_rate);
  std::vector<double> grad(model.params.size());
  const double scale = batch.empty() ? 0.0 : 1.0 / double(batch.size());
  for (std::size_t step = 0; step < c.max_steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    net::accumulate_gradient(model, batch, grad, scale);
    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    if (std::sqrt(norm2) < c.tol) return {std::move(model), step, true};
    adam.step(model, grad);
  }
  return {std::move(model), c.max_steps, false};
}

inline CnmlPrediction cnml_naive(const net::MlpArchitecture& arch, const LabeledDataset& data,
                                 std::span<const double> query, const ConvergenceCriteria& c = {}) {
  if (query.size() != arch.input_dim || data.feature_dim() != arch.input_dim)
    throw std::invalid_argument("cnml_naive: dimension mismatch");
  for (double v : query)
    if (!std::isfinite(v)) throw std::invalid_argument("cnml_naive: non-finite query");
  const net::MlpModel init = net::init_model(arch, c.init_seed);
  auto batch = data.samples();
  batch.push_back({query, 0.0, 1.0});
  double raw[2];
  std::size_t steps = 0;
  bool converged = true;
  for (int label = 0; label < 2; ++label) {
    batch.back().y = label;
    FitResult fit = fit_to_convergence(init, batch, c);
    const double p1 = net::forward(fit.model, query);
    raw[label] = label == 1 ? p1 : 1.0 - p1;
    steps = std::max(steps, fit.steps);
    converged = converged && fit.converged;
  }
  CnmlPrediction out = normalize_likelihoods(raw[0], raw[1]);
  out.steps_used = steps;
  out.converged = converged;
  return out;
}

}  // namespace mural::nml
