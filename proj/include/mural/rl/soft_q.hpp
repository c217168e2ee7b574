#pragma once

// Entropy-regularized (soft) tabular Q-learning.
//
//   V(s)   = tau * log sum_a exp(Q(s, a) / tau)
//   Q(s,a) += lr * (r + gamma * V(s') - Q(s, a))
//
// The behavior policy is Boltzmann over Q / tau. Pairs never updated read a
// caller-supplied default instead of a stored value (see set_untried_values).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mural/rng.hpp"

namespace mural::rl {

struct QTransition {
  std::size_t state = 0;
  std::size_t action = 0;
  std::size_t next_state = 0;
  double reward = 0.0;
  bool terminal = false;
};

class SoftQBackend {
 public:
  SoftQBackend(std::size_t n_states, std::size_t n_actions, double temperature,
               double learning_rate, double discount = 0.99, double initial_value = 0.0)
      : n_states_(n_states), n_actions_(n_actions), tau_(temperature), lr_(learning_rate),
        gamma_(discount), q_(n_states * n_actions, 0.0), tried_(n_states * n_actions, 0),
        untried_(n_states * n_actions, initial_value) {
    if (!std::isfinite(initial_value)) throw std::invalid_argument("soft-q: non-finite initial value");
    if (n_states == 0 || n_actions == 0) throw std::invalid_argument("soft-q: empty table");
    if (!(temperature > 0.0)) throw std::invalid_argument("soft-q: temperature must be > 0");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
      throw std::invalid_argument("soft-q: learning rate must be in (0, 1]");
    if (!(discount >= 0.0 && discount < 1.0))
      throw std::invalid_argument("soft-q: discount must be in [0, 1)");
  }

  std::size_t num_states() const noexcept { return n_states_; }
  std::size_t num_actions() const noexcept { return n_actions_; }
  double temperature() const noexcept { return tau_; }
  double discount() const noexcept { return gamma_; }

  double q(std::size_t s, std::size_t a) const {
    const std::size_t i = s * n_actions_ + a;
    return tried_[i] ? q_[i] : untried_[i];
  }
  void set_q(std::size_t s, std::size_t a, double v) {
    q_[s * n_actions_ + a] = v;
    tried_[s * n_actions_ + a] = 1;
  }
  bool tried(std::size_t s, std::size_t a) const { return tried_[s * n_actions_ + a] != 0; }

  /// Values read for (s, a) pairs that have never been updated, row-major by state.
  void set_untried_values(std::span<const double> v) {
    if (v.size() != q_.size()) throw std::invalid_argument("soft-q: untried values size mismatch");
    for (double x : v)
      if (!std::isfinite(x)) throw std::invalid_argument("soft-q: non-finite untried value");
    untried_.assign(v.begin(), v.end());
  }

  /// Full table with untried entries resolved.
  std::vector<double> table() const {
    std::vector<double> t(q_.size());
    for (std::size_t s = 0; s < n_states_; ++s)
      for (std::size_t a = 0; a < n_actions_; ++a) t[s * n_actions_ + a] = q(s, a);
    return t;
  }

  /// tau * logsumexp(Q(s, .) / tau), computed around the max for stability.
  double soft_value(std::size_t s) const {
    const double m = max_value(s);
    double z = 0.0;
    for (std::size_t a = 0; a < n_actions_; ++a) z += std::exp((q(s, a) - m) / tau_);
    return m + tau_ * std::log(z);
  }

  double max_value(std::size_t s) const {
    double m = q(s, 0);
    for (std::size_t a = 1; a < n_actions_; ++a) m = std::max(m, q(s, a));
    return m;
  }

  void update(const QTransition& t) {
    if (!std::isfinite(t.reward)) throw std::invalid_argument("soft-q: non-finite reward");
    const std::size_t i = t.state * n_actions_ + t.action;
    const double target = t.reward + (t.terminal ? 0.0 : gamma_ * soft_value(t.next_state));
    const double cur = q(t.state, t.action);
    q_[i] = cur + lr_ * (target - cur);
    tried_[i] = 1;
  }

  std::vector<double> policy(std::size_t s) const {
    std::vector<double> p(n_actions_);
    const double v = soft_value(s);
    for (std::size_t a = 0; a < n_actions_; ++a) p[a] = std::exp((q(s, a) - v) / tau_);
    return p;
  }

  std::size_t sample_action(std::size_t s, Rng& rng) const {
    const auto p = policy(s);
    double u = uniform01(rng);
    for (std::size_t a = 0; a + 1 < n_actions_; ++a) {
      if (u < p[a]) return a;
      u -= p[a];
    }
    return n_actions_ - 1;
  }

  /// Highest-valued action; ties go to the lowest index.
  std::size_t greedy_action(std::size_t s) const {
    std::size_t best = 0;
    for (std::size_t a = 1; a < n_actions_; ++a)
      if (q(s, a) > q(s, best)) best = a;
    return best;
  }

  // qtable.bin: "qtable-v1 <states> <actions> <tau> <lr> <gamma>\n" then
  // little-endian doubles, row-major by state, untried entries resolved.
  std::string encode() const {
    std::ostringstream head;
    head.precision(17);
    head << "qtable-v1 " << n_states_ << ' ' << n_actions_ << ' ' << tau_ << ' ' << lr_ << ' '
         << gamma_ << '\n';
    std::string out = head.str();
    for (double v : table()) {
      const auto u = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) out += static_cast<char>((u >> (8 * b)) & 0xff);
    }
    return out;
  }

  static SoftQBackend decode(const std::string& bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw std::runtime_error("qtable: missing header");
    std::istringstream head(bytes.substr(0, nl));
    std::string magic;
    std::size_t ns = 0, na = 0;
    double tau = 0, lr = 0, gamma = 0;
    if (!(head >> magic >> ns >> na >> tau >> lr >> gamma) || magic != "qtable-v1")
      throw std::runtime_error("qtable: malformed header");
    SoftQBackend b(ns, na, tau, lr, gamma);
    if (bytes.size() - nl - 1 != 8 * b.q_.size()) throw std::runtime_error("qtable: truncated");
    for (std::size_t i = 0; i < b.q_.size(); ++i) {
      std::uint64_t u = 0;
      for (int k = 0; k < 8; ++k)
        u |= std::uint64_t(static_cast<unsigned char>(bytes[nl + 1 + 8 * i + k])) << (8 * k);
      b.q_[i] = std::bit_cast<double>(u);
      b.tried_[i] = 1;
    }
    return b;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    const auto bytes = encode();
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("qtable: cannot write '" + path + "'");
  }

  static SoftQBackend load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("qtable: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode(ss.str());
  }

 private:
  std::size_t n_states_, n_actions_;
  double tau_, lr_, gamma_;
  std::vector<double> q_;
  std::vector<std::uint8_t> tried_;
  std::vector<double> untried_;
};

}  // namespace mural::rl
