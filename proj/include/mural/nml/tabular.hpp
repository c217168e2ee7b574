#pragma once

// CNML in the fully tabular setting: each state has its own Bernoulli
// parameter, so the augment-and-refit procedure has a closed form,
//   p(e = 1 | s) = (G + 1) / (N + G + 2).

#include <cstdint>
#include <numeric>
#include <unordered_map>

namespace mural::nml {

struct StateCounts {
  std::uint64_t visits = 0;  // N(s): on-policy occurrences
  std::uint64_t goals = 0;   // G(s): occurrences among success examples
  bool operator==(const StateCounts&) const = default;
};

/// Exact non-negative rational, always kept in lowest terms.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Rational make(std::uint64_t n, std::uint64_t d) {
    const auto g = std::gcd(n, d);
    return g ? Rational{n / g, d / g} : Rational{0, 1};
  }
  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

class TabularCounts {
 public:
  using StateId = std::int64_t;

  StateCounts get(StateId s) const {
    auto it = table_.find(s);
    return it == table_.end() ? StateCounts{} : it->second;
  }
  void add_visits(StateId s, std::uint64_t n = 1) { table_[s].visits += n; }
  void add_goals(StateId s, std::uint64_t n = 1) { table_[s].goals += n; }
  void set(StateId s, StateCounts c) { table_[s] = c; }

  std::uint64_t total_visits() const {
    std::uint64_t n = 0;
    for (const auto& [_, c] : table_) n += c.visits;
    return n;
  }
  const std::unordered_map<StateId, StateCounts>& entries() const noexcept { return table_; }
  bool operator==(const TabularCounts&) const = default;

 private:
  std::unordered_map<StateId, StateCounts> table_;
};

inline Rational cnml_tabular_exact(StateCounts c) {
  return Rational::make(c.goals + 1, c.visits + c.goals + 2);
}

inline double cnml_tabular(StateCounts c) { return cnml_tabular_exact(c).to_double(); }

inline double cnml_tabular(const TabularCounts& counts, TabularCounts::StateId s) {
  return cnml_tabular(counts.get(s));
}

}  // namespace mural::nml
