#pragma once

// 2D navigation mazes on [lo, hi]^2 with zero-thickness axis-aligned walls.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mural::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

inline double norm(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Wall {
  Vec2 a, b;
  bool vertical() const { return a.x == b.x; }
  double ymin() const { return std::min(a.y, b.y); }
  double ymax() const { return std::max(a.y, b.y); }
  double xmin() const { return std::min(a.x, b.x); }
  double xmax() const { return std::max(a.x, b.x); }
  bool operator==(const Wall&) const = default;
};

struct Region {
  Vec2 center;
  double radius = 0.5;
  bool contains(Vec2 p) const { return norm(p, center) <= radius; }
  bool operator==(const Region&) const = default;
};

enum class MazeKind { zigzag, spiral, double_sided };

struct MazeWorld {
  std::string name;
  double lo = -4.0, hi = 4.0;
  std::vector<Wall> walls;
  Vec2 start;
  Region goal;
  std::vector<Region> hidden;
  std::size_t cell_grid = 40;  // count / Q-table grid resolution
  double step_scale = 0.2;     // displacement at |action| = 1
  bool discrete = false;       // moves snap to whole cells
  std::size_t horizon = 100;
  std::size_t lattice = 80;    // maze-distance lattice resolution

  double cell_size() const { return (hi - lo) / double(cell_grid); }
  bool in_bounds(Vec2 p) const { return p.x >= lo && p.x <= hi && p.y >= lo && p.y <= hi; }

  /// Cell index along one axis on an n x n grid.
  std::size_t axis_cell(double v, std::size_t n) const {
    const double t = (v - lo) / (hi - lo) * double(n);
    if (t <= 0.0) return 0;
    return std::min(n - 1, static_cast<std::size_t>(t));
  }
  std::size_t cell_of(Vec2 p) const {
    return axis_cell(p.y, cell_grid) * cell_grid + axis_cell(p.x, cell_grid);
  }
  Vec2 cell_center(std::size_t cell) const {
    const double h = cell_size();
    return {lo + (double(cell % cell_grid) + 0.5) * h, lo + (double(cell / cell_grid) + 0.5) * h};
  }
  std::size_t cell_count() const { return cell_grid * cell_grid; }

  bool on_wall(Vec2 p) const {
    for (const Wall& w : walls) {
      if (w.vertical()) {
        if (p.x == w.a.x && p.y >= w.ymin() && p.y <= w.ymax()) return true;
      } else if (p.y == w.a.y && p.x >= w.xmin() && p.x <= w.xmax()) {
        return true;
      }
    }
    return false;
  }

  bool operator==(const MazeWorld&) const = default;
};

namespace detail {

inline double cross(Vec2 o, Vec2 a, Vec2 b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline bool on_segment(Vec2 p, Vec2 a, Vec2 b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

}  // namespace detail

/// True if segments [p, q] and [a, b] intersect (touching counts).
inline bool segments_intersect(Vec2 p, Vec2 q, Vec2 a, Vec2 b) {
  using detail::cross;
  const double d1 = cross(a, b, p), d2 = cross(a, b, q);
  const double d3 = cross(p, q, a), d4 = cross(p, q, b);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && detail::on_segment(p, a, b)) return true;
  if (d2 == 0 && detail::on_segment(q, a, b)) return true;
  if (d3 == 0 && detail::on_segment(a, p, q)) return true;
  if (d4 == 0 && detail::on_segment(b, p, q)) return true;
  return false;
}

inline bool path_blocked(const MazeWorld& w, Vec2 from, Vec2 to) {
  for (const Wall& wall : w.walls)
    if (segments_intersect(from, to, wall.a, wall.b)) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Layout files
//
//   bounds <lo> <hi>
//   wall <x0> <y0> <x1> <y1>      (repeated, axis-aligned)
//   start <x> <y>
//   goal <x> <y> <r>
//   hidden <x> <y> <r>           (optional, repeated)
//
// Optional tuning lines: name, grid, step, discrete, horizon, lattice.
// ---------------------------------------------------------------------------

/// Checks bounds, placement and that the goal is reachable from the start
/// through 4-connected moves on the distance lattice.
inline void validate_world(const MazeWorld& w) {
  if (!(w.lo < w.hi)) throw std::invalid_argument("maze: bounds must satisfy lo < hi");
  if (w.cell_grid == 0 || w.lattice == 0) throw std::invalid_argument("maze: empty grid");
  if (!(w.step_scale > 0.0)) throw std::invalid_argument("maze: step scale must be > 0");
  if (!(w.goal.radius > 0.0)) throw std::invalid_argument("maze: goal radius must be > 0");
  for (Vec2 p : {w.start, w.goal.center}) {
    if (!w.in_bounds(p)) throw std::invalid_argument("maze: start/goal outside bounds");
    if (w.on_wall(p)) throw std::invalid_argument("maze: start/goal lies on a wall");
  }
  for (const Region& r : w.hidden)
    if (!w.in_bounds(r.center)) throw std::invalid_argument("maze: hidden region outside bounds");
  const std::size_t n = w.lattice;
  const double h = (w.hi - w.lo) / double(n);
  auto cell = [&](Vec2 p) {
    auto ax = [&](double v) {
      const double t = (v - w.lo) / h;
      return t <= 0 ? std::size_t{0} : std::min(n - 1, static_cast<std::size_t>(t));
    };
    return ax(p.y) * n + ax(p.x);
  };
  auto center = [&](std::size_t c) {
    return Vec2{w.lo + (double(c % n) + 0.5) * h, w.lo + (double(c / n) + 0.5) * h};
  };
  std::vector<char> seen(n * n, 0);
  std::vector<std::size_t> queue{cell(w.start)};
  seen[queue[0]] = 1;
  const std::size_t target = cell(w.goal.center);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t c = queue[head];
    if (c == target) return;
    const std::size_t cx = c % n, cy = c / n;
    const std::size_t nbrs[4] = {cx + 1 < n ? c + 1 : c, cx > 0 ? c - 1 : c,
                                 cy + 1 < n ? c + n : c, cy > 0 ? c - n : c};
    for (std::size_t d : nbrs) {
      if (d == c || seen[d] || path_blocked(w, center(c), center(d))) continue;
      seen[d] = 1;
      queue.push_back(d);
    }
  }
  throw std::invalid_argument("maze: goal is unreachable from start");
}

inline MazeWorld parse_layout(std::istream& is) {
  MazeWorld w;
  bool have_start = false, have_goal = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto fail = [&](const std::string& why) {
      throw std::runtime_error("maze layout line " + std::to_string(lineno) + ": " + why);
    };
    auto read = [&](auto&... vals) {
      if (!((ls >> vals) && ...)) fail("malformed '" + key + "' entry");
      std::string extra;
      if (ls >> extra) fail("trailing token '" + extra + "'");
    };
    if (key == "name") {
      read(w.name);
    } else if (key == "bounds") {
      read(w.lo, w.hi);
    } else if (key == "wall") {
      Wall wall;
      read(wall.a.x, wall.a.y, wall.b.x, wall.b.y);
      if (wall.a.x != wall.b.x && wall.a.y != wall.b.y) fail("wall is not axis-aligned");
      w.walls.push_back(wall);
    } else if (key == "start") {
      read(w.start.x, w.start.y);
      have_start = true;
    } else if (key == "goal") {
      read(w.goal.center.x, w.goal.center.y, w.goal.radius);
      have_goal = true;
    } else if (key == "hidden") {
      Region r;
      read(r.center.x, r.center.y, r.radius);
      w.hidden.push_back(r);
    } else if (key == "grid") {
      read(w.cell_grid);
    } else if (key == "step") {
      read(w.step_scale);
    } else if (key == "discrete") {
      int d = 0;
      read(d);
      w.discrete = d != 0;
    } else if (key == "horizon") {
      read(w.horizon);
    } else if (key == "lattice") {
      read(w.lattice);
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!have_start) throw std::runtime_error("maze layout: missing 'start'");
  if (!have_goal) throw std::runtime_error("maze layout: missing 'goal'");
  validate_world(w);
  return w;
}

inline MazeWorld parse_layout(const std::string& text) {
  std::istringstream is(text);
  return parse_layout(is);
}

inline MazeWorld load_layout(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("maze layout: cannot open '" + path + "'");
  return parse_layout(f);
}

inline std::string format_layout(const MazeWorld& w) {
  std::ostringstream os;
  os.precision(17);
  if (!w.name.empty()) os << "name " << w.name << '\n';
  os << "bounds " << w.lo << ' ' << w.hi << '\n';
  for (const Wall& wall : w.walls)
    os << "wall " << wall.a.x << ' ' << wall.a.y << ' ' << wall.b.x << ' ' << wall.b.y << '\n';
  os << "start " << w.start.x << ' ' << w.start.y << '\n';
  os << "goal " << w.goal.center.x << ' ' << w.goal.center.y << ' ' << w.goal.radius << '\n';
  for (const Region& r : w.hidden)
    os << "hidden " << r.center.x << ' ' << r.center.y << ' ' << r.radius << '\n';
  os << "grid " << w.cell_grid << '\n';
  os << "step " << w.step_scale << '\n';
  os << "discrete " << (w.discrete ? 1 : 0) << '\n';
  os << "horizon " << w.horizon << '\n';
  os << "lattice " << w.lattice << '\n';
  return os.str();
}

// Canonical layouts. data/mazes/*.maze hold identical copies.
inline constexpr const char* kZigzagLayout = R"(name zigzag
bounds -4 4
# three horizontal lanes joined by gaps at alternating ends
wall -4 1 2 1
wall -2 -1 4 -1
start -3.1 3.1
goal 3 -3 0.5
)";

inline constexpr const char* kSpiralLayout = R"(name spiral
bounds -4 4
# outer ring, entered through a gap on its upper left side
wall -3 -3 -3 2
wall -3 3 3 3
wall 3 3 3 -3
wall -3 -3 3 -3
# inner box around the goal, open on its lower right side
wall -2 -2 2 -2
wall -2 -2 -2 2
wall -2 2 2 2
wall 2 2 2 -1
start -3.5 3.5
goal 0 0 0.5
)";

inline constexpr const char* kDoubleSidedLayout = R"(name double_sided
bounds -4 4
# central divider, open at the top where the agent starts
wall 0 -4 0 2
# left half: zigzag down to the provided goal
wall -3 1 0 1
wall -4 -1 -1 -1
# right half: a single switchback down to the hidden rewards
wall 0 1 3 1
start 0.1 3.1
goal -3 -3 0.5
hidden 3.5 0 0.5
hidden 3.5 -1.5 0.5
hidden 3.5 -3 0.5
hidden 2 -3 0.5
hidden 1 -2 0.5
)";

inline MazeWorld make_maze(MazeKind kind) {
  switch (kind) {
    case MazeKind::zigzag: return parse_layout(std::string(kZigzagLayout));
    case MazeKind::spiral: return parse_layout(std::string(kSpiralLayout));
    case MazeKind::double_sided: return parse_layout(std::string(kDoubleSidedLayout));
  }
  throw std::invalid_argument("make_maze: unknown kind");
}

/// Layouts are fixed data; the seed is accepted for interface symmetry with
/// the other constructors and does not change the layout.
inline MazeWorld make_maze(MazeKind kind, std::uint64_t /*seed*/) { return make_maze(kind); }

/// The zigzag maze discretized to a 16 x 16 grid with one-cell moves.
inline MazeWorld make_discrete_zigzag(std::size_t grid = 16) {
  MazeWorld w = make_maze(MazeKind::zigzag);
  w.name = "zigzag_discrete";
  w.cell_grid = grid;
  w.step_scale = w.cell_size();
  w.discrete = true;
  w.start = w.cell_center(w.cell_of(w.start));
  validate_world(w);
  return w;
}

inline std::optional<MazeKind> parse_maze_kind(const std::string& s) {
  if (s == "zigzag") return MazeKind::zigzag;
  if (s == "spiral") return MazeKind::spiral;
  if (s == "double_sided") return MazeKind::double_sided;
  return std::nullopt;
}

inline const char* to_string(MazeKind k) {
  switch (k) {
    case MazeKind::zigzag: return "zigzag";
    case MazeKind::spiral: return "spiral";
    case MazeKind::double_sided: return "double_sided";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

struct Transition {
  Vec2 state;
  Vec2 action;
  Vec2 next_state;
  bool done = false;
};

inline constexpr double kWallGap = 1e-9;

namespace detail {

// Move along one axis from `from` by `delta`, stopping just short of the
// first wall crossed. `other` is the fixed coordinate on the other axis.
inline double move_axis(const MazeWorld& w, bool x_axis, double from, double delta, double other,
                        bool discrete) {
  double to = from + delta;
  if (delta == 0.0) return from;
  for (const Wall& wall : w.walls) {
    const bool blocks_axis = x_axis ? wall.vertical() : !wall.vertical();
    if (!blocks_axis) continue;
    const double c = x_axis ? wall.a.x : wall.a.y;
    const double lo = x_axis ? wall.ymin() : wall.xmin();
    const double hi = x_axis ? wall.ymax() : wall.xmax();
    if (other < lo || other > hi) continue;
    const bool crosses = delta > 0 ? (from < c && to >= c) : (from > c && to <= c);
    if (!crosses) continue;
    if (discrete) return from;
    to = delta > 0 ? c - kWallGap : c + kWallGap;
  }
  if (to < w.lo || to > w.hi) {
    if (discrete) return from;
    to = std::clamp(to, w.lo, w.hi);
  }
  return to;
}

}  // namespace detail

/// Axis-separated motion: x first, then y, each stopped at walls and bounds,
/// so the agent slides along walls.
inline Transition step(const MazeWorld& w, Vec2 s, Vec2 action) {
  const Vec2 a{std::clamp(action.x, -1.0, 1.0), std::clamp(action.y, -1.0, 1.0)};
  Vec2 next = s;
  next.x = detail::move_axis(w, true, s.x, w.step_scale * a.x, s.y, w.discrete);
  next.y = detail::move_axis(w, false, s.y, w.step_scale * a.y, next.x, w.discrete);
  return {s, a, next, false};
}

/// Eight compass actions used by the tabular backend.
inline constexpr Vec2 kActions[8] = {{1, 0},  {1, 1},   {0, 1},  {-1, 1},
                                     {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
inline constexpr std::size_t kNumActions = 8;

}  // namespace mural::env
