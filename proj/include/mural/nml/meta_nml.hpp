#pragma once

// Meta-NML: meta-learn an initialization from which a few gradient steps on
// the dataset augmented with (x_q, y') approximate the refit of CNML.
//
// Every adaptation batch holds up to b - 1 dataset points plus the query
// point. Dataset points are weighted by an exponential kernel around the
// query; the query is weighted by 1 / (batches per epoch) so that one pass of
// such batches has the same objective as the plain augmented dataset. The
// task loss is the weighted mean of per-sample BCE.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mural/net/mlp.hpp"
#include "mural/net/optimizer.hpp"
#include "mural/nml/cnml.hpp"
#include "mural/nml/dataset.hpp"
#include "mural/rng.hpp"

namespace mural::nml {

enum class MetaGradient { first_order, second_order };

struct MetaNmlConfig {
  double inner_lr = 1e-2;
  std::size_t adaptation_batch_size = 64;
  std::size_t tasks_per_epoch = 128;
  double kernel_lambda_dist = 0.5;
  std::size_t query_steps = 1;
  std::size_t retrain_interval = 1;
  std::size_t meta_test_set_size = 2048;
  double outer_lr = 1e-3;
  std::size_t meta_batch_size = 16;  // tasks per outer update
  MetaGradient meta_gradient = MetaGradient::first_order;
  bool kernel_weighting = true;
  bool importance_weighting = true;
  std::uint64_t seed = 0;

  bool operator==(const MetaNmlConfig&) const = default;

  void validate() const {
    if (!(inner_lr > 0.0)) throw std::invalid_argument("meta-nml: inner_lr must be > 0");
    if (adaptation_batch_size < 2)
      throw std::invalid_argument("meta-nml: adaptation_batch_size must be >= 2");
    if (!(kernel_lambda_dist > 0.0))
      throw std::invalid_argument("meta-nml: kernel_lambda_dist must be > 0");
    if (!(outer_lr > 0.0)) throw std::invalid_argument("meta-nml: outer_lr must be > 0");
    if (meta_batch_size == 0) throw std::invalid_argument("meta-nml: meta_batch_size must be >= 1");
    if (retrain_interval == 0)
      throw std::invalid_argument("meta-nml: retrain_interval must be >= 1");
  }
};

struct MetaTask {
  std::size_t index = 0;  // query point within the task pool
  int proposed_label = 0;
  bool operator==(const MetaTask&) const = default;
};

/// One task per (point, proposed label): 2n tasks for n points.
inline std::vector<MetaTask> build_meta_tasks(std::size_t n_points) {
  std::vector<MetaTask> tasks;
  tasks.reserve(2 * n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    tasks.push_back({i, 0});
    tasks.push_back({i, 1});
  }
  return tasks;
}

inline std::vector<MetaTask> build_meta_tasks(const LabeledDataset& data) {
  return build_meta_tasks(data.size());
}

/// exp(-(2.3 / lambda) * |x - x_q|); equals ~0.1 at distance lambda.
inline double kernel_weight(std::span<const double> x, std::span<const double> x_q,
                            double lambda_dist) {
  if (!(lambda_dist > 0.0)) throw std::invalid_argument("kernel_weight: lambda_dist must be > 0");
  return std::exp(-(2.3 / lambda_dist) * euclidean(x, x_q));
}

/// 1 / ceil(N / (b - 1)): the query rides in every batch of an epoch.
inline double query_importance_weight(std::size_t n_dataset, std::size_t batch_size) {
  if (n_dataset == 0) throw std::invalid_argument("query_importance_weight: N must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("query_importance_weight: b must be >= 2");
  const std::size_t per = batch_size - 1;
  return 1.0 / double((n_dataset + per - 1) / per);
}

namespace detail {

// Samples for one adaptation batch: dataset points first, query last.
inline void make_task_batch(const LabeledDataset& data, std::span<const double> x_q,
                            int label, const MetaNmlConfig& cfg, Rng& rng,
                            std::vector<std::size_t>& scratch, std::vector<net::Sample>& out) {
  const std::size_t n = data.size();
  const std::size_t take = std::min(n, cfg.adaptation_batch_size - 1);
  out.clear();
  if (take == n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back({data.point(i), double(data.label(i)), 1.0});
  } else {
    scratch.resize(n);
    std::iota(scratch.begin(), scratch.end(), std::size_t{0});
    for (std::size_t k = 0; k < take; ++k) {
      std::swap(scratch[k], scratch[k + uniform_index(rng, n - k)]);
      const std::size_t i = scratch[k];
      out.push_back({data.point(i), double(data.label(i)), 1.0});
    }
  }
  if (cfg.kernel_weighting)
    for (auto& s : out) s.w = kernel_weight(s.x, x_q, cfg.kernel_lambda_dist);
  const double wq =
      cfg.importance_weighting && n > 0 ? query_importance_weight(n, cfg.adaptation_batch_size) : 1.0;
  out.push_back({x_q, double(label), wq});
}

inline double total_weight(std::span<const net::Sample> batch) {
  double s = 0.0;
  for (const auto& x : batch) s += x.w;
  return s;
}

// grad <- d/dtheta of the weighted-mean loss; returns the loss.
inline double task_gradient(const net::MlpModel& m, std::span<const net::Sample> batch,
                            std::vector<double>& grad) {
  grad.assign(m.params.size(), 0.0);
  return net::accumulate_gradient(m, batch, grad, 1.0 / total_weight(batch));
}

inline double task_loss(const net::MlpModel& m, std::span<const net::Sample> batch) {
  return net::weighted_bce_loss(m, batch) / total_weight(batch);
}

inline std::uint64_t query_hash(std::span<const double> x) {
  std::uint64_t h = 0x51ed270b27a8f3c1ULL;
  for (double v : x) h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  return h;
}

}  // namespace detail

/// k plain gradient steps of the task loss for (x_q, label), each on a freshly
/// sampled batch that contains the query.
inline net::MlpModel adapt(net::MlpModel model, const LabeledDataset& data,
                           std::span<const double> x_q, int label, const MetaNmlConfig& cfg,
                           std::size_t steps, Rng& rng) {
  std::vector<net::Sample> batch;
  std::vector<std::size_t> scratch;
  std::vector<double> grad;
  for (std::size_t s = 0; s < steps; ++s) {
    detail::make_task_batch(data, x_q, label, cfg, rng, scratch, batch);
    detail::task_gradient(model, batch, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) model.params[i] -= cfg.inner_lr * grad[i];
  }
  return model;
}

/// Meta-NML prediction with an explicit number of adaptation steps. The
/// batch sequence depends only on (cfg.seed, x_q), so both labels see the
/// same batches.
inline CnmlPrediction cnml_meta_query_steps(const net::MlpModel& meta_model,
                                            const LabeledDataset& data,
                                            std::span<const double> x_q,
                                            const MetaNmlConfig& cfg, std::size_t steps) {
  if (x_q.size() != meta_model.arch.input_dim || data.feature_dim() != meta_model.arch.input_dim)
    throw std::invalid_argument("cnml_meta_query: dimension mismatch");
  const std::uint64_t qseed = mix64(stream_seed(cfg.seed, "meta-query") ^ detail::query_hash(x_q));
  double raw[2];
  if (steps == 1) {
    // Both labels share the dataset part of the batch; only the query term
    // (p - y) * dlogit/dtheta differs.
    Rng rng(qseed);
    std::vector<net::Sample> batch;
    std::vector<std::size_t> scratch;
    detail::make_task_batch(data, x_q, 0, cfg, rng, scratch, batch);
    const double inv_w = 1.0 / detail::total_weight(batch);
    const double wq = batch.back().w;
    std::vector<double> g_data(meta_model.params.size(), 0.0);
    net::accumulate_gradient(meta_model, std::span(batch).first(batch.size() - 1), g_data, inv_w);
    net::detail::Workspace ws(meta_model.arch);
    const double p_q = net::sigmoid(net::detail::forward_pass(meta_model, x_q, ws));
    std::vector<double> g_logit(meta_model.params.size(), 0.0);
    net::detail::backward_pass(meta_model, 1.0, ws, g_logit);
    net::MlpModel adapted = meta_model;
    for (int label = 0; label < 2; ++label) {
      const double dq = wq * inv_w * net::detail::bce_dlogit(p_q, label);
      for (std::size_t i = 0; i < adapted.params.size(); ++i)
        adapted.params[i] = meta_model.params[i] - cfg.inner_lr * (g_data[i] + dq * g_logit[i]);
      const double p1 = net::sigmoid(net::detail::forward_pass(adapted, x_q, ws));
      raw[label] = label == 1 ? p1 : 1.0 - p1;
    }
  } else {
    for (int label = 0; label < 2; ++label) {
      Rng rng(qseed);
      const net::MlpModel adapted = adapt(meta_model, data, x_q, label, cfg, steps, rng);
      const double p1 = net::forward(adapted, x_q);
      raw[label] = label == 1 ? p1 : 1.0 - p1;
    }
  }
  CnmlPrediction out = normalize_likelihoods(raw[0], raw[1]);
  out.steps_used = steps;
  return out;
}

inline CnmlPrediction cnml_meta_query(const net::MlpModel& meta_model, const LabeledDataset& data,
                                      std::span<const double> x_q, const MetaNmlConfig& cfg) {
  return cnml_meta_query_steps(meta_model, data, x_q, cfg, cfg.query_steps);
}

struct MetaTrainResult {
  net::MlpModel model;
  double mean_post_adaptation_loss = 0.0;  // over the final epoch's tasks
};

/// Meta-trains on tasks built from `query_pool` (defaults to the dataset's
/// own points); each task adapts to `data` augmented with one pool point.
inline MetaTrainResult meta_train(net::MlpModel model, const LabeledDataset& data,
                                  const MetaNmlConfig& cfg, std::size_t epochs,
                                  const std::optional<net::MlpModel>& warm_start = std::nullopt,
                                  const LabeledDataset* query_pool = nullptr) {
  cfg.validate();
  if (!data.has_both_labels() && !(query_pool && !data.empty()))
    throw std::invalid_argument("meta_train: dataset must contain both labels");
  if (warm_start) {
    if (warm_start->arch != model.arch)
      throw std::invalid_argument("meta_train: warm start architecture mismatch");
    model = *warm_start;
  }
  if (data.feature_dim() != model.arch.input_dim)
    throw std::invalid_argument("meta_train: dataset dimension does not match model");
  MetaTrainResult result{model, 0.0};
  if (epochs == 0) {
    result.model = std::move(model);
    return result;
  }
  const LabeledDataset& pool = query_pool ? *query_pool : data;
  if (pool.empty()) throw std::invalid_argument("meta_train: empty query pool");
  std::vector<MetaTask> tasks = build_meta_tasks(pool);
  Rng rng = make_rng(cfg.seed, "meta-train");
  net::Optimizer adam = net::Optimizer::adam(cfg.outer_lr);
  const std::size_t P = model.params.size();
  std::vector<double> outer(P), g_in(P), g_out(P), g_plus(P), g_minus(P);
  std::vector<net::Sample> support, target;
  std::vector<std::size_t> scratch;
  net::MlpModel adapted = model, probe = model;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    // Uniform without replacement among the 2n tasks.
    const std::size_t count = std::min(cfg.tasks_per_epoch, tasks.size());
    for (std::size_t k = 0; k < count; ++k)
      std::swap(tasks[k], tasks[k + uniform_index(rng, tasks.size() - k)]);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < count; start += cfg.meta_batch_size) {
      const std::size_t end = std::min(count, start + cfg.meta_batch_size);
      std::fill(outer.begin(), outer.end(), 0.0);
      for (std::size_t t = start; t < end; ++t) {
        const MetaTask& task = tasks[t];
        const auto x_q = pool.point(task.index);
        detail::make_task_batch(data, x_q, task.proposed_label, cfg, rng, scratch, support);
        detail::make_task_batch(data, x_q, task.proposed_label, cfg, rng, scratch, target);
        detail::task_gradient(model, support, g_in);
        for (std::size_t i = 0; i < P; ++i) adapted.params[i] = model.params[i] - cfg.inner_lr * g_in[i];
        loss_sum += detail::task_gradient(adapted, target, g_out);
        if (cfg.meta_gradient == MetaGradient::second_order) {
          // (I - alpha * H_support) g_out, with the Hessian-vector product
          // taken by central differences of the support gradient.
          double norm = 0.0;
          for (double g : g_out) norm += g * g;
          norm = std::sqrt(norm);
          if (norm > 0.0) {
            const double eps = 1e-5 / norm;
            for (std::size_t i = 0; i < P; ++i) probe.params[i] = model.params[i] + eps * g_out[i];
            detail::task_gradient(probe, support, g_plus);
            for (std::size_t i = 0; i < P; ++i) probe.params[i] = model.params[i] - eps * g_out[i];
            detail::task_gradient(probe, support, g_minus);
            for (std::size_t i = 0; i < P; ++i)
              g_out[i] -= cfg.inner_lr * (g_plus[i] - g_minus[i]) / (2.0 * eps);
          }
        }
        for (std::size_t i = 0; i < P; ++i) outer[i] += g_out[i] / double(end - start);
      }
      adam.step(model, outer);
    }
    result.mean_post_adaptation_loss = loss_sum / double(count);
  }
  result.model = std::move(model);
  return result;
}

/// Mean post-adaptation task loss of `model` over the given tasks, each
/// evaluated on the full augmented, weighted dataset.
inline double mean_post_adaptation_loss(const net::MlpModel& model, const LabeledDataset& data,
                                        const LabeledDataset& pool, std::span<const MetaTask> tasks,
                                        const MetaNmlConfig& cfg) {
  double sum = 0.0;
  std::vector<net::Sample> full;
  for (const MetaTask& task : tasks) {
    const auto x_q = pool.point(task.index);
    Rng rng(mix64(stream_seed(cfg.seed, "meta-eval") ^ detail::query_hash(x_q)));
    const net::MlpModel adapted = adapt(model, data, x_q, task.proposed_label, cfg, 1, rng);
    full = data.samples();
    if (cfg.kernel_weighting)
      for (auto& s : full) s.w = kernel_weight(s.x, x_q, cfg.kernel_lambda_dist);
    full.push_back({x_q, double(task.proposed_label), 1.0});
    sum += detail::task_loss(adapted, full);
  }
  return tasks.empty() ? 0.0 : sum / double(tasks.size());
}

}  // namespace mural::nml
