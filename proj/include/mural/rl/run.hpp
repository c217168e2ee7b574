#pragma once

// The outer loop: collect on-policy states, refit the success classifier,
// relabel rewards, update the soft-Q backend, evaluate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mural/env/distance.hpp"
#include "mural/env/encoding.hpp"
#include "mural/env/maze.hpp"
#include "mural/net/checkpoint.hpp"
#include "mural/nml/meta_nml.hpp"
#include "mural/nml/mle.hpp"
#include "mural/rl/config.hpp"
#include "mural/rl/rewards.hpp"
#include "mural/rl/soft_q.hpp"

namespace mural::rl {

// ---------------------------------------------------------------------------
// Environment assembly
// ---------------------------------------------------------------------------

inline env::MazeWorld make_world(const RunConfig& cfg) {
  if (is_discrete(cfg.env)) return env::make_discrete_zigzag(16);
  if (!cfg.layout_path.empty()) return env::load_layout(cfg.layout_path);
  switch (cfg.env) {
    case EnvKind::zigzag: return env::make_maze(env::MazeKind::zigzag);
    case EnvKind::spiral: return env::make_maze(env::MazeKind::spiral);
    case EnvKind::double_sided: return env::make_maze(env::MazeKind::double_sided);
    case EnvKind::discrete_zigzag:
    case EnvKind::shuffled_zigzag: break;
  }
  throw std::invalid_argument("unknown environment");
}

inline env::StateEncoding make_encoding(const RunConfig& cfg, const env::MazeWorld& w) {
  if (cfg.env == EnvKind::shuffled_zigzag)
    return env::StateEncoding::shuffled(w, stream_seed(cfg.require_seed(), "env"));
  return env::StateEncoding::continuous();
}

// ---------------------------------------------------------------------------
// Evaluation and coverage
// ---------------------------------------------------------------------------

struct EvalResult {
  double success_rate = 0.0;
  double mean_final_distance = 0.0;
};

/// Greedy rollouts from the start state. Continuous worlds jitter the start
/// uniformly by up to `jitter` per axis so rollouts are not all identical.
inline EvalResult evaluate_policy(const SoftQBackend& q, const env::MazeWorld& w,
                                  const env::MazeDistance& dist, std::size_t n_rollouts,
                                  std::uint64_t seed, double jitter = 0.1) {
  if (n_rollouts == 0) throw std::invalid_argument("evaluate_policy: n_rollouts must be >= 1");
  if (q.num_states() != w.cell_count())
    throw std::invalid_argument("evaluate_policy: Q-table does not match the world's grid");
  Rng rng = make_rng(seed, "rollouts");
  EvalResult r;
  for (std::size_t k = 0; k < n_rollouts; ++k) {
    env::Vec2 s = w.start;
    if (!w.discrete && jitter > 0.0) {
      for (;;) {
        const env::Vec2 c{w.start.x + jitter * (2.0 * uniform01(rng) - 1.0),
                          w.start.y + jitter * (2.0 * uniform01(rng) - 1.0)};
        if (w.in_bounds(c) && !w.on_wall(c) && !env::path_blocked(w, w.start, c)) {
          s = c;
          break;
        }
      }
    }
    bool success = dist.is_success(s);
    for (std::size_t t = 0; t < w.horizon && !success; ++t) {
      s = env::step(w, s, env::kActions[q.greedy_action(w.cell_of(s))]).next_state;
      success = dist.is_success(s);
    }
    r.success_rate += success ? 1.0 : 0.0;
    r.mean_final_distance += dist.distance_to_goal(s);
  }
  r.success_rate /= double(n_rollouts);
  r.mean_final_distance /= double(n_rollouts);
  return r;
}

inline EvalResult evaluate_policy(const SoftQBackend& q, const env::MazeWorld& w,
                                  std::size_t n_rollouts, std::uint64_t seed) {
  return evaluate_policy(q, w, env::MazeDistance(w), n_rollouts, seed);
}

/// Count-grid cells whose center is reachable from the start.
inline std::vector<bool> free_cells(const env::MazeWorld& w, const env::MazeDistance& dist) {
  const auto field = dist.field_from(w.start);
  std::vector<bool> free(w.cell_count(), false);
  for (std::size_t c = 0; c < w.cell_count(); ++c) {
    const env::Vec2 p = w.cell_center(c);
    free[c] = !w.on_wall(p) && std::isfinite(field[dist.lattice_cell(p)]);
  }
  return free;
}

inline double coverage(const nml::TabularCounts& counts, const std::vector<bool>& free) {
  std::size_t total = 0, seen = 0;
  for (std::size_t c = 0; c < free.size(); ++c) {
    if (!free[c]) continue;
    ++total;
    if (counts.get(static_cast<std::int64_t>(c)).visits > 0) ++seen;
  }
  return total ? double(seen) / double(total) : 0.0;
}

inline double coverage(const nml::TabularCounts& counts, const env::MazeWorld& w) {
  return coverage(counts, free_cells(w, env::MazeDistance(w)));
}

// ---------------------------------------------------------------------------
// Replayed transitions
// ---------------------------------------------------------------------------

/// Every distinct (cell, action, next cell) seen so far, with its mean
/// environment reward. Rewards from the classifier are relabelled on replay.
class TransitionReplay {
 public:
  struct Entry {
    std::size_t state, action, next_state;
    double env_reward_sum = 0.0;
    std::uint64_t count = 0;
  };

  void add(std::size_t s, std::size_t a, std::size_t s2, double env_reward) {
    const std::uint64_t key = (std::uint64_t(s) << 36) | (std::uint64_t(a) << 32) | std::uint64_t(s2);
    auto [it, fresh] = index_.try_emplace(key, entries_.size());
    if (fresh) entries_.push_back({s, a, s2, 0.0, 0});
    Entry& e = entries_[it->second];
    e.env_reward_sum += env_reward;
    ++e.count;
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }

  /// `sweeps` passes over all entries, each in a fresh random order.
  void replay(SoftQBackend& q, std::span<const double> cell_reward, std::size_t sweeps,
              Rng& rng) const {
    std::vector<std::size_t> order(entries_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = 0; k < sweeps; ++k) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i : order) {
        const Entry& e = entries_[i];
        q.update({e.state, e.action, e.next_state,
                  cell_reward[e.next_state] + e.env_reward_sum / double(e.count), false});
      }
    }
  }

 private:
  std::unordered_map<std::uint64_t, std::size_t> index_;
  std::vector<Entry> entries_;
};

/// Cell reached from each (cell, action) if the maze had no interior walls.
inline std::vector<std::size_t> nominal_successors(const env::MazeWorld& w) {
  env::MazeWorld open = w;
  open.walls.clear();
  std::vector<std::size_t> next(w.cell_count() * env::kNumActions);
  for (std::size_t c = 0; c < w.cell_count(); ++c)
    for (std::size_t a = 0; a < env::kNumActions; ++a)
      next[c * env::kNumActions + a] =
          open.cell_of(env::step(open, w.cell_center(c), env::kActions[a]).next_state);
  return next;
}

/// Values for untried pairs: one soft backup through the nominal successor
/// (the cell the move points at). An unvisited successor's own value is not
/// known, so the current cell's value stands in for it.
inline std::vector<double> untried_values(const SoftQBackend& q,
                                          std::span<const std::size_t> nominal,
                                          std::span<const double> cell_reward,
                                          const std::vector<bool>& visited) {
  const std::size_t A = q.num_actions();
  std::vector<double> soft(q.num_states());
  for (std::size_t s = 0; s < q.num_states(); ++s) soft[s] = q.soft_value(s);
  std::vector<double> v(nominal.size());
  for (std::size_t i = 0; i < nominal.size(); ++i) {
    const std::size_t s = i / A, n = nominal[i];
    v[i] = cell_reward[n] + q.discount() * (visited[n] ? soft[n] : soft[s]);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Training log
// ---------------------------------------------------------------------------

struct LogRow {
  std::size_t epoch = 0;
  double success_rate = 0.0;
  double final_distance = 0.0;
  double coverage = 0.0;
  double clf_loss = 0.0;
  double mean_reward_pos = 0.0;
  double mean_reward_neg = 0.0;
  double wall_clock_s = 0.0;
  bool hidden_reward_found = false;
};

inline constexpr const char* kLogHeader =
    "epoch,success_rate,final_distance,coverage,clf_loss,mean_reward_pos,mean_reward_neg,"
    "wall_clock_s,hidden_reward_found";

inline std::string format_log_row(const LogRow& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.epoch << ',' << r.success_rate << ',' << r.final_distance << ','
     << r.coverage << ',' << r.clf_loss << ',' << r.mean_reward_pos << ',' << r.mean_reward_neg
     << ',' << r.wall_clock_s << ',' << (r.hidden_reward_found ? 1 : 0);
  return os.str();
}

struct TrainingLog {
  std::vector<LogRow> rows;

  void write_csv(std::ostream& os) const {
    os << kLogHeader << '\n';
    for (const auto& r : rows) os << format_log_row(r) << '\n';
  }

  static TrainingLog read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kLogHeader)
      throw std::runtime_error("training log: bad header");
    TrainingLog log;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      LogRow r;
      int hidden = 0;
      if (!(ls >> r.epoch >> r.success_rate >> r.final_distance >> r.coverage >> r.clf_loss >>
            r.mean_reward_pos >> r.mean_reward_neg >> r.wall_clock_s >> hidden))
        throw std::runtime_error("training log: malformed row '" + line + "'");
      r.hidden_reward_found = hidden != 0;
      log.rows.push_back(r);
    }
    return log;
  }

  static TrainingLog load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("training log: cannot open '" + path + "'");
    return read_csv(f);
  }
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline void write_counts_csv(const nml::TabularCounts& counts, std::ostream& os) {
  std::vector<std::pair<std::int64_t, nml::StateCounts>> rows(counts.entries().begin(),
                                                               counts.entries().end());
  std::sort(rows.begin(), rows.end(), [](auto& a, auto& b) { return a.first < b.first; });
  os << "cell,visits,goals\n";
  for (const auto& [id, c] : rows) os << id << ',' << c.visits << ',' << c.goals << '\n';
}

inline nml::TabularCounts read_counts_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "cell,visits,goals")
    throw std::runtime_error("counts: bad header");
  nml::TabularCounts counts;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::int64_t id = 0;
    nml::StateCounts c;
    if (!(ls >> id >> c.visits >> c.goals)) throw std::runtime_error("counts: malformed row");
    counts.set(id, c);
  }
  return counts;
}

/// What `run` hands to a checkpoint writer at the end of an epoch.
struct EpochState {
  std::size_t epoch = 0;
  const RunConfig* config = nullptr;
  const ClassifierState* classifier = nullptr;
  const SoftQBackend* q = nullptr;
  const TrainingLog* log = nullptr;
};

using EpochHook = std::function<void(const EpochState&)>;

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// Exposed so tests can inspect the final state of a run.
struct RunResult {
  TrainingLog log;
  ClassifierState classifier;
  SoftQBackend q;
  std::uint64_t positives_hash_before = 0;
  std::uint64_t positives_hash_after = 0;
};

inline RunResult run_detailed(const RunConfig& cfg, const EpochHook& on_epoch = {}) {
  cfg.validate();
  const std::uint64_t seed = cfg.require_seed();
  const auto t0 = std::chrono::steady_clock::now();

  const env::MazeWorld world = make_world(cfg);
  env::validate_world(world);
  const env::StateEncoding encoding = make_encoding(cfg, world);
  const env::MazeDistance dist(world);
  const std::vector<bool> free = free_cells(world, dist);
  const RewardContext ctx{&world, &encoding, &dist};
  const std::size_t n_cells = world.cell_count();

  const std::vector<env::Vec2> goal_raw = env::sample_goal_examples(
      world, cfg.goal_examples, stream_seed(seed, "env"),
      [&](env::Vec2 p) { return dist.is_success(p); });
  std::vector<OutcomeBuffers::Point> goal_enc;
  for (auto g : goal_raw) goal_enc.push_back(env::encode_state(world, encoding, g));
  OutcomeBuffers buffers(std::move(goal_enc), cfg.negatives_capacity);

  const net::MlpArchitecture arch = cfg.architecture();
  ClassifierState clf;
  clf.method = cfg.method;
  clf.meta_cfg = cfg.meta;
  clf.bonus_scale = cfg.mle.bonus_scale;
  if (uses_mle(cfg.method)) clf.mle = net::init_model(arch, stream_seed(seed, "classifier-init", 0));
  if (uses_meta(cfg.method))
    clf.meta = net::init_model(arch, stream_seed(seed, "classifier-init", 1));
  env::update_counts(clf.counts, world, {}, goal_raw);

  SoftQBackend q(n_cells, env::kNumActions, cfg.q.temperature, cfg.q.learning_rate, cfg.q.discount);
  TransitionReplay replay;
  std::vector<double> cell_reward(n_cells, 0.0);
  const std::vector<std::size_t> nominal = nominal_successors(world);
  Rng act_rng = make_rng(seed, "behavior");
  Rng data_rng = make_rng(seed, "classifier-data");
  Rng replay_rng = make_rng(seed, "replay");

  RunResult result{{}, {}, q, buffers.positives_hash(), 0};
  TrainingLog& log = result.log;
  bool hidden_found = false;
  env::Vec2 s = world.start;
  std::size_t t_in_episode = 0;
  double clf_loss = 0.0;
  std::vector<env::Vec2> fresh;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Collect on-policy samples.
    fresh.clear();
    for (std::size_t k = 0; k < cfg.steps_per_epoch; ++k) {
      const std::size_t c = world.cell_of(s);
      const std::size_t a = q.sample_action(c, act_rng);
      const env::Vec2 s2 = env::step(world, s, env::kActions[a]).next_state;
      double env_r = 0.0;
      for (const auto& h : world.hidden)
        if (h.contains(s2)) env_r = 1.0;
      if (env_r > 0.0) hidden_found = true;
      replay.add(c, a, world.cell_of(s2), env_r);
      q.update({c, a, world.cell_of(s2), cell_reward[world.cell_of(s2)] + env_r, false});
      buffers.add_negative(env::encode_state(world, encoding, s2));
      fresh.push_back(s2);
      s = s2;
      if (++t_in_episode >= world.horizon) {
        s = world.start;
        t_in_episode = 0;
      }
    }
    env::update_counts(clf.counts, world, fresh, {});

    // Refit the classifier.
    const bool retrain = (epoch - 1) % cfg.meta.retrain_interval == 0;
    if (cfg.method != Method::sparse && retrain) {
      nml::LabeledDataset data = buffers.balanced_dataset(cfg.meta.meta_test_set_size, data_rng);
      clf.meta_cfg.seed = stream_seed(seed, "meta", epoch);
      if (uses_mle(cfg.method)) {
        nml::MleOptions o;
        o.learning_rate = cfg.mle.learning_rate;
        o.batch_size = cfg.mle.batch_size;
        o.mixup_alpha = cfg.mle.mixup_alpha;
        o.weight_decay = cfg.method == Method::vice_count_bonus ? 0.0 : cfg.mle.weight_decay;
        o.seed = stream_seed(seed, "mle", epoch);
        auto r = nml::mle_train(*clf.mle, data, cfg.mle.passes_per_epoch, o);
        clf.mle = std::move(r.model);
        clf_loss = r.final_loss;
      }
      if (cfg.method == Method::mural) {
        const auto pool = buffers.sample_negatives(cfg.n_train, data_rng);
        auto r = nml::meta_train(*clf.meta, data, clf.meta_cfg, cfg.meta_epochs_per_retrain,
                                 std::nullopt, &pool);
        clf.meta = std::move(r.model);
        clf_loss = r.mean_post_adaptation_loss;
        clf.meta_data = std::move(data);
      } else if (cfg.method == Method::count_only_ablation) {
        auto negatives = buffers.sample_negatives(cfg.meta.meta_test_set_size / 2, data_rng);
        const auto pool = buffers.sample_negatives(cfg.n_train, data_rng);
        auto r = nml::meta_train(*clf.meta, negatives, clf.meta_cfg, cfg.meta_epochs_per_retrain,
                                 std::nullopt, &pool);
        clf.meta = std::move(r.model);
        clf.meta_data = std::move(negatives);
      } else if (cfg.method == Method::no_meta_ablation) {
        clf.meta_data = std::move(data);
      }
    }

    // Relabel rewards on the count grid and update the backend.
    // The sparse reward is environment feedback, so it is only known where
    // the agent has been; classifier rewards can be queried anywhere.
    for (std::size_t c = 0; c < n_cells; ++c) {
      const bool known = cfg.method != Method::sparse ||
                         clf.counts.get(static_cast<std::int64_t>(c)).visits > 0;
      cell_reward[c] =
          free[c] && known ? reward_for_method(clf, ctx, world.cell_center(c)) : 0.0;
    }
    std::vector<bool> visited(n_cells);
    for (std::size_t c = 0; c < n_cells; ++c)
      visited[c] = clf.counts.get(static_cast<std::int64_t>(c)).visits > 0;
    for (std::size_t k = 0; k < cfg.q.sweeps_per_epoch; ++k) {
      q.set_untried_values(untried_values(q, nominal, cell_reward, visited));
      replay.replay(q, cell_reward, 1, replay_rng);
    }

    const EvalResult ev =
        evaluate_policy(q, world, dist, cfg.eval_rollouts, stream_seed(seed, "eval", epoch),
                        cfg.eval_start_jitter);
    LogRow row;
    row.epoch = epoch;
    row.success_rate = ev.success_rate;
    row.final_distance = ev.mean_final_distance;
    row.coverage = coverage(clf.counts, free);
    row.clf_loss = clf_loss;
    for (auto g : goal_raw) row.mean_reward_pos += cell_reward[world.cell_of(g)];
    row.mean_reward_pos /= double(goal_raw.size());
    for (auto f : fresh) row.mean_reward_neg += cell_reward[world.cell_of(f)];
    row.mean_reward_neg /= double(fresh.size());
    row.wall_clock_s = cfg.log_wall_clock
                           ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                           : 0.0;
    row.hidden_reward_found = hidden_found;
    log.rows.push_back(row);

    if (on_epoch) on_epoch({epoch, &cfg, &clf, &q, &log});
  }

  result.classifier = std::move(clf);
  result.q = std::move(q);
  result.positives_hash_after = buffers.positives_hash();
  return result;
}

inline TrainingLog run(const RunConfig& cfg, const EpochHook& on_epoch = {}) {
  return run_detailed(cfg, on_epoch).log;
}

}  // namespace mural::rl
