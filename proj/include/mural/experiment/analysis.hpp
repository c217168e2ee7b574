#pragma once

// Reward-grid export, meta-NML convergence gaps and classifier latency bench.

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "mural/experiment/checkpoint_dir.hpp"
#include "mural/nml/cnml.hpp"
#include "mural/nml/meta_nml.hpp"
#include "mural/rl/run.hpp"

namespace mural::experiment {

// ---------------------------------------------------------------------------
// Reward grid
// ---------------------------------------------------------------------------

struct GridPoint {
  double x = 0.0, y = 0.0, reward = 0.0;
};

enum class GridClassifier { stored, tabular };

/// Cell centers of a res x res grid over [lo, hi]^2, row-major from the
/// bottom-left corner.
inline std::vector<env::Vec2> grid_centers(std::size_t res, double lo = -4.0, double hi = 4.0) {
  if (res == 0) throw std::invalid_argument("reward grid: resolution must be >= 1");
  const double h = (hi - lo) / double(res);
  std::vector<env::Vec2> out;
  out.reserve(res * res);
  for (std::size_t j = 0; j < res; ++j)
    for (std::size_t i = 0; i < res; ++i)
      out.push_back({lo + (double(i) + 0.5) * h, lo + (double(j) + 0.5) * h});
  return out;
}

inline std::vector<GridPoint> reward_grid(const LoadedCheckpoint& ck, std::size_t res,
                                          GridClassifier which = GridClassifier::stored) {
  const env::MazeWorld world = rl::make_world(ck.config.run);
  const env::StateEncoding enc = rl::make_encoding(ck.config.run, world);
  const env::MazeDistance dist(world);
  const rl::RewardContext ctx{&world, &enc, &dist};
  std::vector<GridPoint> out;
  for (env::Vec2 p : grid_centers(res, world.lo, world.hi)) {
    const double r = which == GridClassifier::tabular
                         ? rl::tabular_reward(ck.classifier.counts, world, p)
                         : rl::reward_for_method(ck.classifier, ctx, p);
    out.push_back({p.x, p.y, r});
  }
  return out;
}

inline void write_reward_grid_csv(const std::vector<GridPoint>& g, std::ostream& os) {
  os << "x,y,reward\n";
  os.precision(17);
  for (const auto& p : g) os << p.x << ',' << p.y << ',' << p.reward << '\n';
}

// ---------------------------------------------------------------------------
// Meta-NML vs naive CNML
// ---------------------------------------------------------------------------

struct ConvergenceSetup {
  net::MlpArchitecture arch{2, {32, 32}, net::Activation::relu};
  std::uint64_t init_seed = 1;
  std::size_t meta_epochs = 200;
  std::size_t grid = 10;  // queries at grid x grid cell centers over [-4, 4]^2
  nml::MetaNmlConfig meta;
  nml::ConvergenceCriteria naive;
};

/// Mean |p_meta - p_naive| over the query grid for each adaptation step
/// count; 0 steps means the unadapted meta-trained model.
inline std::vector<double> convergence_gaps(const nml::LabeledDataset& data,
                                            const std::vector<std::size_t>& steps,
                                            const ConvergenceSetup& setup = {}) {
  if (!data.has_both_labels())
    throw std::invalid_argument("convergence: dataset must contain both labels");
  const auto queries = grid_centers(setup.grid);
  std::vector<double> naive;
  for (env::Vec2 q : queries) {
    const double x[2] = {q.x, q.y};
    naive.push_back(nml::cnml_naive(setup.arch, data, x, setup.naive).p_label1);
  }
  const auto meta = nml::meta_train(net::init_model(setup.arch, setup.init_seed), data, setup.meta,
                                    setup.meta_epochs)
                        .model;
  std::vector<double> gaps;
  for (std::size_t k : steps) {
    double sum = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const double x[2] = {queries[i].x, queries[i].y};
      const double p = k == 0 ? net::forward(meta, x)
                              : nml::cnml_meta_query_steps(meta, data, x, setup.meta, k).p_label1;
      sum += std::abs(p - naive[i]);
    }
    gaps.push_back(sum / double(queries.size()));
  }
  return gaps;
}

// ---------------------------------------------------------------------------
// Latency bench
// ---------------------------------------------------------------------------

struct BenchOptions {
  std::vector<std::size_t> hidden{64, 64};
  std::size_t dataset_size = 32;
  std::size_t n_queries = 100;
  std::size_t naive_queries = 100;
  std::size_t states_per_epoch = 1600;  // cells relabelled per RL epoch
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string classifier;
  double latency_s = 0.0;
  double per_epoch_s = 0.0;
};

/// Two Gaussian clusters, half per label.
inline nml::LabeledDataset synthetic_clusters(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "bench-data");
  std::normal_distribution<double> g(0.0, 0.5);
  nml::LabeledDataset d(2);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = int(i % 2);
    const double c = y ? 1.5 : -1.5;
    const double x[2] = {c + g(rng), c + g(rng)};
    d.add(x, y);
  }
  return d;
}

inline std::vector<BenchRow> bench(const BenchOptions& o) {
  if (o.dataset_size < 2 || o.n_queries == 0 || o.naive_queries == 0)
    throw std::invalid_argument("bench: sizes must be >= 1 (dataset >= 2)");
  const net::MlpArchitecture arch{2, o.hidden, net::Activation::relu};
  const auto data = synthetic_clusters(o.dataset_size, o.seed);
  const auto model = net::init_model(arch, stream_seed(o.seed, "bench-model"));
  nml::MetaNmlConfig cfg;
  Rng rng = make_rng(o.seed, "bench-queries");
  auto query = [&] {
    return std::array<double, 2>{-4.0 + 8.0 * uniform01(rng), -4.0 + 8.0 * uniform01(rng)};
  };
  using clock = std::chrono::steady_clock;
  auto time_it = [&](std::size_t n, auto&& fn) {
    volatile double sink = 0.0;
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < n; ++i) sink = sink + fn(query());
    return std::chrono::duration<double>(clock::now() - t0).count() / double(n);
  };
  std::vector<BenchRow> rows;
  auto add = [&](const char* name, double s) {
    rows.push_back({name, s, s * double(o.states_per_epoch)});
  };
  add("feedforward", time_it(o.n_queries, [&](auto x) { return net::forward(model, x); }));
  add("meta_nml", time_it(o.n_queries,
                          [&](auto x) { return nml::cnml_meta_query(model, data, x, cfg).p_label1; }));
  add("naive_cnml", time_it(o.naive_queries,
                            [&](auto x) { return nml::cnml_naive(arch, data, x).p_label1; }));
  return rows;
}

inline void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& os) {
  os << "classifier,latency_s,per_epoch_s\n";
  os.precision(9);
  for (const auto& r : rows) os << r.classifier << ',' << r.latency_s << ',' << r.per_epoch_s << '\n';
}

}  // namespace mural::experiment
