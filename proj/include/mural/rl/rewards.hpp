#pragma once

// Per-method reward functions over maze states.

#include <array>
#include <cmath>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <span>
#include <stdexcept>
#include <vector>

#include "mural/env/distance.hpp"
#include "mural/env/encoding.hpp"
#include "mural/env/maze.hpp"
#include "mural/nml/dataset.hpp"
#include "mural/nml/meta_nml.hpp"
#include "mural/nml/tabular.hpp"
#include "mural/rl/config.hpp"

namespace mural::rl {

/// S+ is fixed at construction; S- is a FIFO replay of encoded on-policy states.
class OutcomeBuffers {
 public:
  using Point = std::array<double, 2>;

  OutcomeBuffers(std::vector<Point> positives, std::size_t negatives_capacity)
      : positives_(std::move(positives)), cap_(negatives_capacity) {
    if (positives_.empty()) throw std::invalid_argument("outcome buffers: no success examples");
    if (cap_ == 0) throw std::invalid_argument("outcome buffers: capacity must be >= 1");
  }

  const std::vector<Point>& positives() const noexcept { return positives_; }
  const std::deque<Point>& negatives() const noexcept { return negatives_; }
  std::size_t capacity() const noexcept { return cap_; }

  void add_negative(Point p) {
    if (negatives_.size() == cap_) negatives_.pop_front();
    negatives_.push_back(p);
  }

  /// Order-sensitive hash of S+.
  std::uint64_t positives_hash() const {
    std::uint64_t h = 0;
    for (const auto& p : positives_) h = mix64(h ^ nml::detail::query_hash(p));
    return h;
  }

  /// Balanced dataset: n/2 positives and n/2 negatives, each drawn uniformly
  /// (with replacement when the source buffer is smaller than n/2).
  nml::LabeledDataset balanced_dataset(std::size_t n, Rng& rng) const {
    if (negatives_.empty()) throw std::logic_error("outcome buffers: no negatives yet");
    const std::size_t half = n / 2;
    nml::LabeledDataset d(2);
    for (std::size_t i : draw(positives_.size(), half, rng)) d.add(positives_[i], 1);
    for (std::size_t i : draw(negatives_.size(), half, rng)) d.add(negatives_[i], 0);
    return d;
  }

  /// Up to n distinct negatives (all of them when fewer), labelled 0.
  nml::LabeledDataset sample_negatives(std::size_t n, Rng& rng) const {
    nml::LabeledDataset d(2);
    for (std::size_t i : draw(negatives_.size(), std::min(n, negatives_.size()), rng))
      d.add(negatives_[i], 0);
    return d;
  }

 private:
  // k indices from [0, n): without replacement when k <= n.
  static std::vector<std::size_t> draw(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(k);
    if (k > n) {
      for (std::size_t i = 0; i < k; ++i) out.push_back(uniform_index(rng, n));
      return out;
    }
    // Partial Fisher-Yates over a sparse swap map, O(k).
    std::unordered_map<std::size_t, std::size_t> swapped;
    auto at = [&](std::size_t i) {
      auto it = swapped.find(i);
      return it == swapped.end() ? i : it->second;
    };
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + uniform_index(rng, n - i);
      const std::size_t vi = at(i), vj = at(j);
      swapped[j] = vi;
      out.push_back(vj);
    }
    return out;
  }

  std::vector<Point> positives_;
  std::size_t cap_;
  std::deque<Point> negatives_;
};

/// Whatever a method needs to score a state.
struct ClassifierState {
  Method method = Method::mural;
  std::optional<net::MlpModel> mle;   // vice family
  std::optional<net::MlpModel> meta;  // meta-NML initialization
  nml::LabeledDataset meta_data{2};   // dataset the meta-NML queries adapt to
  nml::MetaNmlConfig meta_cfg;
  nml::TabularCounts counts;
  double bonus_scale = 1.0;
};

/// Context shared by every reward query in one environment.
struct RewardContext {
  const env::MazeWorld* world = nullptr;
  const env::StateEncoding* encoding = nullptr;
  const env::MazeDistance* distance = nullptr;  // sparse only
};

inline double reward_for_method(const ClassifierState& c, const RewardContext& ctx, env::Vec2 s) {
  const auto x = env::encode_state(*ctx.world, *ctx.encoding, s);
  auto need = [](const auto& m, const char* what) -> const net::MlpModel& {
    if (!m) throw std::logic_error(std::string("reward: missing ") + what + " classifier");
    return *m;
  };
  auto meta_p = [&] {
    return nml::cnml_meta_query(need(c.meta, "meta-NML"), c.meta_data, x, c.meta_cfg).p_label1;
  };
  switch (c.method) {
    case Method::mural:
    case Method::no_meta_ablation:
      return meta_p();
    case Method::vice:
      return net::forward(need(c.mle, "MLE"), x);
    case Method::vice_count_bonus: {
      const auto n = c.counts.get(static_cast<std::int64_t>(ctx.world->cell_of(s))).visits;
      return net::forward(need(c.mle, "MLE"), x) + c.bonus_scale / (double(n) + 2.0);
    }
    case Method::count_only_ablation:
      return net::forward(need(c.mle, "MLE"), x) + meta_p();
    case Method::sparse:
      if (!ctx.distance) throw std::logic_error("reward: sparse needs the maze distance");
      if (!ctx.world->in_bounds(s) || ctx.world->on_wall(s)) return 0.0;
      return ctx.distance->is_success(s) ? 1.0 : 0.0;
  }
  return 0.0;
}

/// Tabular CNML reward (G+1)/(N+G+2) on the count grid.
inline double tabular_reward(const nml::TabularCounts& counts, const env::MazeWorld& w,
                             env::Vec2 s) {
  return nml::cnml_tabular(counts, static_cast<std::int64_t>(w.cell_of(s)));
}

}  // namespace mural::rl
