#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mural/env/maze.hpp"
#include "mural/net/mlp.hpp"
#include "mural/nml/meta_nml.hpp"

namespace mural::rl {

enum class Method { mural, vice, vice_count_bonus, sparse, count_only_ablation, no_meta_ablation };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::mural: return "mural";
    case Method::vice: return "vice";
    case Method::vice_count_bonus: return "vice_count_bonus";
    case Method::sparse: return "sparse";
    case Method::count_only_ablation: return "count_only_ablation";
    case Method::no_meta_ablation: return "no_meta_ablation";
  }
  return "?";
}

inline std::optional<Method> parse_method(const std::string& s) {
  for (Method m : {Method::mural, Method::vice, Method::vice_count_bonus, Method::sparse,
                   Method::count_only_ablation, Method::no_meta_ablation})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

inline bool uses_mle(Method m) {
  return m == Method::vice || m == Method::vice_count_bonus || m == Method::count_only_ablation;
}
inline bool uses_meta(Method m) {
  return m == Method::mural || m == Method::count_only_ablation || m == Method::no_meta_ablation;
}

// discrete_zigzag and shuffled_zigzag share the 16 x 16 one-cell-move maze and
// differ only in what the classifier sees.
enum class EnvKind { zigzag, spiral, double_sided, discrete_zigzag, shuffled_zigzag };

inline bool is_discrete(EnvKind k) {
  return k == EnvKind::discrete_zigzag || k == EnvKind::shuffled_zigzag;
}

inline const char* to_string(EnvKind k) {
  switch (k) {
    case EnvKind::zigzag: return "zigzag";
    case EnvKind::spiral: return "spiral";
    case EnvKind::double_sided: return "double_sided";
    case EnvKind::discrete_zigzag: return "discrete_zigzag";
    case EnvKind::shuffled_zigzag: return "shuffled_zigzag";
  }
  return "?";
}

inline std::optional<EnvKind> parse_env_kind(const std::string& s) {
  for (EnvKind k : {EnvKind::zigzag, EnvKind::spiral, EnvKind::double_sided,
                    EnvKind::discrete_zigzag, EnvKind::shuffled_zigzag})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

/// Knobs for the MLE (VICE-style) classifier.
struct MleKnobs {
  std::size_t passes_per_epoch = 2;  // n_VICE, full dataset passes per RL epoch
  double learning_rate = 1e-4;
  std::size_t batch_size = 128;
  double mixup_alpha = 1.0;
  double weight_decay = 5e-3;
  double bonus_scale = 1.0;  // vice_count_bonus only
  bool operator==(const MleKnobs&) const = default;
};

struct QKnobs {
  double temperature = 0.01;
  double learning_rate = 0.5;
  double discount = 0.99;
  std::size_t sweeps_per_epoch = 100;  // passes over the replayed transition set
  bool operator==(const QKnobs&) const = default;
};

struct RunConfig {
  Method method = Method::mural;
  EnvKind env = EnvKind::zigzag;
  std::string layout_path;  // optional override of the built-in layout
  std::optional<std::uint64_t> seed;
  std::size_t epochs = 200;
  std::size_t steps_per_epoch = 1000;
  std::size_t n_train = 64;
  std::size_t goal_examples = 150;
  std::size_t negatives_capacity = 100000;
  std::size_t eval_rollouts = 20;
  double eval_start_jitter = 0.1;
  std::vector<std::size_t> hidden_sizes{64, 64};
  std::size_t meta_epochs_per_retrain = 1;
  // A single first-order step at the library's default rate barely moves the
  // small classifier, so visited and unvisited states score alike.
  nml::MetaNmlConfig meta{.inner_lr = 1.0};
  MleKnobs mle;
  QKnobs q;
  std::size_t checkpoint_every = 0;  // 0 keeps only the final epoch
  bool log_wall_clock = true;

  bool operator==(const RunConfig&) const = default;

  std::uint64_t require_seed() const {
    if (!seed) throw std::invalid_argument("run config: seed is mandatory");
    return *seed;
  }

  void validate() const {
    require_seed();
    if (epochs == 0) throw std::invalid_argument("run config: epochs must be >= 1");
    if (steps_per_epoch == 0) throw std::invalid_argument("run config: steps_per_epoch must be >= 1");
    if (n_train == 0) throw std::invalid_argument("run config: n_train must be >= 1");
    if (goal_examples == 0) throw std::invalid_argument("run config: goal_examples must be >= 1");
    if (negatives_capacity == 0)
      throw std::invalid_argument("run config: negatives_capacity must be >= 1");
    if (eval_rollouts == 0) throw std::invalid_argument("run config: eval_rollouts must be >= 1");
    if (meta.meta_test_set_size < 2)
      throw std::invalid_argument("run config: meta_test_set_size must be >= 2");
    if (hidden_sizes.empty()) throw std::invalid_argument("run config: hidden_sizes is empty");
    for (auto h : hidden_sizes)
      if (h == 0) throw std::invalid_argument("run config: hidden sizes must be >= 1");
    meta.validate();
    if (mle.passes_per_epoch == 0 || mle.batch_size == 0 || !(mle.learning_rate > 0.0))
      throw std::invalid_argument("run config: invalid MLE classifier settings");
    if (mle.bonus_scale < 0.0 || mle.weight_decay < 0.0 || mle.mixup_alpha < 0.0)
      throw std::invalid_argument("run config: MLE knobs must be non-negative");
    if (q.sweeps_per_epoch == 0) throw std::invalid_argument("run config: q sweeps must be >= 1");
    if (is_discrete(env) && !layout_path.empty())
      throw std::invalid_argument(std::string("run config: ") + to_string(env) +
                                  " does not take a layout file");
  }

  net::MlpArchitecture architecture() const { return {2, hidden_sizes, net::Activation::relu}; }
};

}  // namespace mural::rl
