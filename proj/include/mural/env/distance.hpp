#pragma once

// Shortest-path ("maze") distance through free space, computed by Dijkstra
// on an 8-connected lattice of cell centers.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mural/env/maze.hpp"

namespace mural::env {

inline constexpr double kSuccessThreshold = 0.5;

class MazeDistance {
 public:
  explicit MazeDistance(const MazeWorld& w)
      : world_(w), n_(w.lattice), h_((w.hi - w.lo) / double(w.lattice)) {
    open_.assign(n_ * n_, {});
    for (std::size_t c = 0; c < n_ * n_; ++c) {
      const std::size_t cx = c % n_, cy = c / n_;
      for (std::size_t k = 0; k < 8; ++k) {
        const long nx = long(cx) + kDx[k], ny = long(cy) + kDy[k];
        if (nx < 0 || ny < 0 || nx >= long(n_) || ny >= long(n_)) continue;
        const std::size_t d = std::size_t(ny) * n_ + std::size_t(nx);
        open_[c][k] = !path_blocked(world_, center(c), center(d));
      }
    }
    // Diagonals also need both orthogonal detours open (no corner cutting).
    for (std::size_t c = 0; c < n_ * n_; ++c)
      for (std::size_t k = 1; k < 8; k += 2)
        if (open_[c][k] && !(open_[c][k - 1] && open_[c][(k + 1) % 8])) open_[c][k] = false;
    goal_field_ = field_from(w.goal.center);
  }

  const MazeWorld& world() const noexcept { return world_; }
  double lattice_step() const noexcept { return h_; }

  std::size_t lattice_cell(Vec2 p) const {
    auto ax = [&](double v) {
      const double t = (v - world_.lo) / h_;
      return t <= 0 ? std::size_t{0} : std::min(n_ - 1, static_cast<std::size_t>(t));
    };
    return ax(p.y) * n_ + ax(p.x);
  }

  Vec2 center(std::size_t c) const {
    return {world_.lo + (double(c % n_) + 0.5) * h_, world_.lo + (double(c / n_) + 0.5) * h_};
  }

  /// Lattice distances from the cell containing `source` to every cell.
  std::vector<double> field_from(Vec2 source) const {
    check_point(source);
    std::vector<double> dist(n_ * n_, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    const std::size_t s = lattice_cell(source);
    dist[s] = 0.0;
    pq.push({0.0, s});
    const double diag = h_ * std::sqrt(2.0);
    while (!pq.empty()) {
      auto [d, c] = pq.top();
      pq.pop();
      if (d > dist[c]) continue;
      const std::size_t cx = c % n_, cy = c / n_;
      for (std::size_t k = 0; k < 8; ++k) {
        if (!open_[c][k]) continue;
        const std::size_t nb = std::size_t(long(cy) + kDy[k]) * n_ + std::size_t(long(cx) + kDx[k]);
        const double nd = d + ((k % 2) ? diag : h_);
        if (nd < dist[nb]) {
          dist[nb] = nd;
          pq.push({nd, nb});
        }
      }
    }
    return dist;
  }

  double distance(Vec2 s, Vec2 g) const {
    check_point(s);
    check_point(g);
    if (lattice_cell(s) == lattice_cell(g)) return norm(s, g);
    return field_from(s)[lattice_cell(g)];
  }

  double distance_to_goal(Vec2 s) const {
    check_point(s);
    const std::size_t c = lattice_cell(s);
    if (c == lattice_cell(world_.goal.center)) return norm(s, world_.goal.center);
    return goal_field_[c];
  }

  bool is_success(Vec2 s) const { return distance_to_goal(s) <= kSuccessThreshold; }

 private:
  static constexpr long kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
  static constexpr long kDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

  void check_point(Vec2 p) const {
    if (!world_.in_bounds(p)) throw std::invalid_argument("maze distance: point outside bounds");
    if (world_.on_wall(p)) throw std::invalid_argument("maze distance: point lies on a wall");
  }

  MazeWorld world_;
  std::size_t n_;
  double h_;
  std::vector<std::array<bool, 8>> open_;
  std::vector<double> goal_field_;
};

inline double maze_distance(const MazeWorld& w, Vec2 s, Vec2 g) {
  return MazeDistance(w).distance(s, g);
}

inline bool is_success(const MazeWorld& w, Vec2 s) { return MazeDistance(w).is_success(s); }

}  // namespace mural::env
