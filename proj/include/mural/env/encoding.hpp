#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "mural/env/maze.hpp"
#include "mural/nml/tabular.hpp"
#include "mural/rng.hpp"

namespace mural::env {

enum class EncodingMode { continuous_xy, shuffled_discrete };

/// What the classifier sees of a state. The shuffled mode replaces a state
/// by the center of a seeded random permutation of its grid cell, so nearby
/// states no longer look alike.
struct StateEncoding {
  EncodingMode mode = EncodingMode::continuous_xy;
  std::vector<std::size_t> permutation;  // cell -> image cell (shuffled mode)

  static StateEncoding continuous() { return {}; }

  static StateEncoding shuffled(const MazeWorld& w, std::uint64_t seed) {
    StateEncoding e{EncodingMode::shuffled_discrete, {}};
    e.permutation.resize(w.cell_count());
    std::iota(e.permutation.begin(), e.permutation.end(), std::size_t{0});
    Rng rng = make_rng(seed, "state-shuffle");
    for (std::size_t i = e.permutation.size(); i > 1; --i)
      std::swap(e.permutation[i - 1], e.permutation[uniform_index(rng, i)]);
    return e;
  }
};

inline std::array<double, 2> encode_state(const MazeWorld& w, const StateEncoding& e, Vec2 s) {
  if (e.mode == EncodingMode::continuous_xy) return {s.x, s.y};
  const Vec2 c = w.cell_center(e.permutation.at(w.cell_of(s)));
  return {c.x, c.y};
}

/// Uniform points in the goal disc that also pass the success test.
template <class SuccessFn>
std::vector<Vec2> sample_goal_examples(const MazeWorld& w, std::size_t count, std::uint64_t seed,
                                       SuccessFn&& is_success) {
  std::vector<Vec2> out;
  out.reserve(count);
  Rng rng = make_rng(seed, "goal-examples");
  while (out.size() < count) {
    const double r = w.goal.radius * std::sqrt(uniform01(rng));
    const double t = 2.0 * 3.14159265358979323846 * uniform01(rng);
    const Vec2 p{w.goal.center.x + r * std::cos(t), w.goal.center.y + r * std::sin(t)};
    if (!w.in_bounds(p) || w.on_wall(p) || !is_success(p)) continue;
    out.push_back(p);
  }
  return out;
}

/// N(cell) += 1 per visited state; G(cell) is reset to the goal-example
/// occupancy of each cell.
inline void update_counts(nml::TabularCounts& counts, const MazeWorld& w,
                          std::span<const Vec2> visited, std::span<const Vec2> goal_examples) {
  for (Vec2 s : visited) counts.add_visits(static_cast<std::int64_t>(w.cell_of(s)));
  if (goal_examples.empty()) return;
  std::vector<std::uint64_t> goals(w.cell_count(), 0);
  for (Vec2 g : goal_examples) ++goals[w.cell_of(g)];
  for (std::size_t c = 0; c < goals.size(); ++c) {
    auto cur = counts.get(static_cast<std::int64_t>(c));
    if (cur.goals != goals[c]) {
      cur.goals = goals[c];
      counts.set(static_cast<std::int64_t>(c), cur);
    }
  }
}

/// CSV `cell_x,cell_y,visits`, one row per grid cell.
inline void write_visitations_csv(const nml::TabularCounts& counts, const MazeWorld& w,
                                  std::ostream& os) {
  os << "cell_x,cell_y,visits\n";
  for (std::size_t c = 0; c < w.cell_count(); ++c)
    os << c % w.cell_grid << ',' << c / w.cell_grid << ','
       << counts.get(static_cast<std::int64_t>(c)).visits << '\n';
}

}  // namespace mural::env
