#pragma once

// Maximum-likelihood success classifier (the VICE-style baseline).

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "mural/net/mlp.hpp"
#include "mural/net/optimizer.hpp"
#include "mural/nml/dataset.hpp"
#include "mural/rng.hpp"

namespace mural::nml {

struct MleOptions {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double mixup_alpha = 0.0;         // 0 disables mixup
  std::size_t early_stop_epochs = 0;  // 0 disables early stopping
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
};

struct MleResult {
  net::MlpModel model;
  double final_loss = 0.0;  // mean per-sample loss of the last epoch
  std::size_t epochs_run = 0;
};

/// Draw from Beta(a, a) through two Gamma variates.
inline double sample_beta(Rng& rng, double a) {
  std::gamma_distribution<double> gamma(a, 1.0);
  const double u = gamma(rng), v = gamma(rng);
  return (u + v) > 0.0 ? u / (u + v) : 0.5;
}

/// Mini-batch Adam on the mean BCE. Batches are reshuffled every epoch.
inline MleResult mle_train(net::MlpModel model, const LabeledDataset& data, std::size_t epochs,
                           const MleOptions& opt) {
  if (data.empty()) throw std::invalid_argument("mle_train: empty dataset");
  if (!data.has_both_labels())
    throw std::invalid_argument("mle_train: dataset must contain both labels");
  if (data.feature_dim() != model.arch.input_dim)
    throw std::invalid_argument("mle_train: dataset dimension does not match model");
  if (opt.batch_size == 0) throw std::invalid_argument("mle_train: batch_size must be >= 1");

  net::Optimizer adam = net::Optimizer::adam(opt.learning_rate, opt.weight_decay);
  Rng order_rng = make_rng(opt.seed, "mle-order");
  Rng mix_rng = make_rng(opt.seed, "mle-mixup");
  const std::size_t n = data.size(), dim = data.feature_dim();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(model.params.size());
  std::vector<double> mixed;
  std::vector<net::Sample> batch;

  MleResult result{model, 0.0, 0};
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      const std::size_t end = std::min(n, start + opt.batch_size);
      const std::size_t m = end - start;
      batch.clear();
      if (opt.mixup_alpha > 0.0) {
        mixed.assign(m * dim, 0.0);
        for (std::size_t k = 0; k < m; ++k) {
          const std::size_t i = order[start + k];
          const std::size_t j = order[start + uniform_index(mix_rng, m)];
          const double lam = sample_beta(mix_rng, opt.mixup_alpha);
          auto xi = data.point(i), xj = data.point(j);
          for (std::size_t d = 0; d < dim; ++d)
            mixed[k * dim + d] = lam * xi[d] + (1.0 - lam) * xj[d];
          batch.push_back({std::span<const double>(mixed.data() + k * dim, dim),
                           lam * data.label(i) + (1.0 - lam) * data.label(j), 1.0});
        }
      } else {
        for (std::size_t k = start; k < end; ++k)
          batch.push_back({data.point(order[k]), double(data.label(order[k])), 1.0});
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      epoch_loss += net::accumulate_gradient(model, batch, grad, 1.0 / double(m)) * double(m);
      adam.step(model, grad);
    }
    epoch_loss /= double(n);
    result.final_loss = epoch_loss;
    result.epochs_run = epoch + 1;
    if (opt.early_stop_epochs > 0) {
      if (epoch_loss < best - 1e-9) {
        best = epoch_loss;
        since_best = 0;
      } else if (++since_best >= opt.early_stop_epochs) {
        break;
      }
    }
  }
  result.model = std::move(model);
  return result;
}

inline double accuracy(const net::MlpModel& model, const LabeledDataset& data) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    ok += (net::forward(model, data.point(i)) >= 0.5) == (data.label(i) == 1);
  return data.empty() ? 0.0 : double(ok) / double(data.size());
}

}  // namespace mural::nml
