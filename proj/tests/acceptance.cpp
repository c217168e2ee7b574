// Acceptance checks. Usage: acceptance [criterion numbers...]; no arguments
// runs all ten. Prints one PASS/FAIL line per criterion and exits non-zero if
// any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mural/experiment/analysis.hpp"
#include "mural/nml/cnml.hpp"
#include "mural/nml/meta_nml.hpp"
#include "mural/nml/tabular.hpp"
#include "mural/rl/run.hpp"
#include "support/oracles.hpp"

using namespace mural;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome tabular_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t bad = 0, cases = 0;
  for (std::uint64_t n = 0; n <= 50; ++n)
    for (std::uint64_t g = 0; g <= 50; ++g) {
      ++cases;
      const auto got = nml::cnml_tabular_exact({n, g});
      const auto ref = oracle::tabular_cnml_refit(n, g);
      const bool formula = got.num * (n + g + 2) == (g + 1) * got.den;
      const bool same = got.num == ref.num && got.den == ref.den &&
                        nml::cnml_tabular({n, g}) == double(ref.num) / double(ref.den);
      if (!formula || !same) ++bad;
    }
  const double s = seconds_since(t0);
  return {bad == 0 && cases == 2601 && s < 1.0,
          std::to_string(cases - bad) + "/" + std::to_string(cases) + " exact, " + fmt(s) + " s"};
}

Outcome cnml_uniformity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_rng(2024, "clusters");
  std::normal_distribution<double> noise(0.0, 0.3);
  nml::LabeledDataset d(2);
  for (int i = 0; i < 32; ++i) {
    const double a[2] = {-1.0 + noise(rng), noise(rng)};
    const double b[2] = {1.0 + noise(rng), noise(rng)};
    d.add(a, 0);
    d.add(b, 1);
  }
  const net::MlpArchitecture arch{2, {32, 32}};
  double max_norm_err = 0.0, lo = 1.0, hi = 0.0;
  const double diam = d.diameter();
  double reach = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    reach = std::max(reach, std::hypot(d.point(i)[0], d.point(i)[1]));
  auto check = [&](double x, double y, bool far) {
    const double q[2] = {x, y};
    const auto p = nml::cnml_naive(arch, d, q);
    max_norm_err = std::max(max_norm_err, std::abs(p.p_label0 + p.p_label1 - 1.0));
    if (far) {
      lo = std::min(lo, p.p_label1);
      hi = std::max(hi, p.p_label1);
    }
  };
  for (auto [x, y] : {std::pair{-1.0, 0.0}, {1.0, 0.0}, {0.0, 0.0}, {0.0, 1.0}}) check(x, y, false);
  const double r = reach + 10.0 * diam;
  for (int k = 0; k < 8; ++k) {
    const double t = 2.0 * 3.14159265358979323846 * k / 8.0;
    check(r * std::cos(t), r * std::sin(t), true);
  }
  const double s = seconds_since(t0);
  return {max_norm_err <= 1e-9 && lo >= 0.35 && hi <= 0.65 && s < 300.0,
          "max |p0+p1-1| " + fmt(max_norm_err) + ", far p1 in [" + fmt(lo) + ", " + fmt(hi) +
              "], " + fmt(s) + " s"};
}

Outcome meta_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = nml::load_dataset_csv(std::string(MURAL_DATA_DIR) + "/reference_dataset.csv");
  const auto g = experiment::convergence_gaps(d, {1, 2, 5});
  const double s = seconds_since(t0);
  return {d.size() == 32 && g[0] <= 0.15 && g[1] <= g[0] && g[2] <= g[1] && s < 600.0,
          "gaps 1/2/5 steps: " + fmt(g[0]) + " / " + fmt(g[1]) + " / " + fmt(g[2]) + ", " +
              fmt(s) + " s"};
}

Outcome importance_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_rng(7, "identity");
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 500);
    const std::size_t b = 2 + uniform_index(rng, 127);
    const auto m = net::init_model({2, {16, 16}}, 100 + trial);
    std::vector<std::array<double, 2>> xs(n + 1);
    for (auto& x : xs) x = {8.0 * uniform01(rng) - 4.0, 8.0 * uniform01(rng) - 4.0};
    std::vector<net::Sample> data;
    for (std::size_t i = 0; i < n; ++i) data.push_back({xs[i], double(uniform_index(rng, 2)), 1.0});
    const double yq = double(uniform_index(rng, 2));

    auto augmented = data;
    augmented.push_back({xs[n], yq, 1.0});
    const double plain = net::weighted_bce_loss(m, augmented);

    const double w = nml::query_importance_weight(n, b);
    double epoch = 0.0;
    for (std::size_t start = 0; start < n; start += b - 1) {
      std::vector<net::Sample> batch(data.begin() + long(start),
                                     data.begin() + long(std::min(n, start + b - 1)));
      batch.push_back({xs[n], yq, w});
      epoch += net::weighted_bce_loss(m, batch);
    }
    worst = std::max(worst, std::abs(epoch - plain));
  }
  const double s = seconds_since(t0);
  return {worst <= 1e-9 && s < 10.0, "max |epoch - plain| " + fmt(worst) + ", " + fmt(s) + " s"};
}

Outcome kernel_values() {
  const double o[2] = {0.0, 0.0};
  const double lambda = 0.5;
  auto at = [&](double d) {
    const double x[2] = {d, 0.0};
    return nml::kernel_weight(x, o, lambda);
  };
  bool monotone = true;
  for (double d = 0.0; d < 5.0; d += 0.01) monotone = monotone && at(d + 0.01) < at(d);
  const double w0 = at(0.0), wl = at(lambda);
  return {w0 == 1.0 && std::abs(wl - 0.1003) <= 1e-3 && monotone,
          "w(0) " + fmt(w0) + ", w(lambda) " + fmt(wl, 6) + (monotone ? ", decreasing" : ", NOT decreasing")};
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_rng(6, "gradcheck");
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t dim = 1 + uniform_index(rng, 4);
    std::vector<std::size_t> hidden;
    for (std::size_t l = 0, L = 1 + uniform_index(rng, 3); l < L; ++l)
      hidden.push_back(2 + uniform_index(rng, 8));
    const auto m = oracle::random_model({dim, hidden}, 1000 + trial);
    std::vector<std::vector<double>> xs(4 + uniform_index(rng, 12));
    for (auto& x : xs)
      for (std::size_t k = 0; k < dim; ++k) x.push_back(6.0 * uniform01(rng) - 3.0);
    std::vector<net::Sample> batch;
    for (auto& x : xs) batch.push_back({x, double(uniform_index(rng, 2)), 0.1 + 2.0 * uniform01(rng)});
    const auto g = net::gradient(m, batch);
    const auto fd = oracle::fd_gradient(m, batch);
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, oracle::rel_error(g[i], fd[i]));
  }
  const double s = seconds_since(t0);
  return {worst <= 1e-4 && s < 30.0, "max relative error " + fmt(worst) + ", " + fmt(s) + " s"};
}

// ---------------------------------------------------------------------------
// RL criteria

struct SeedStats {
  double final_success = 0.0;
  double best_success = 0.0;
  double final_coverage = 0.0;
  bool hidden_found = false;
};

rl::RunConfig base_config(rl::Method m, rl::EnvKind env, std::uint64_t seed) {
  rl::RunConfig c;
  c.method = m;
  c.env = env;
  c.seed = seed;
  return c;
}

// Runs one seed. `stop_when_hidden_found` ends the run at the first epoch the
// hidden regions are reached; the flag never resets, so later epochs cannot
// change the outcome.
SeedStats run_seed(const rl::RunConfig& c, bool stop_when_hidden_found = false) {
  struct Done {};
  SeedStats st;
  const auto t0 = std::chrono::steady_clock::now();
  auto note = [&](const rl::LogRow& row) {
    st.final_success = row.success_rate;
    st.best_success = std::max(st.best_success, row.success_rate);
    st.final_coverage = row.coverage;
    st.hidden_found = row.hidden_reward_found;
  };
  try {
    rl::run(c, [&](const rl::EpochState& e) {
      note(e.log->rows.back());
      if (stop_when_hidden_found && st.hidden_found) throw Done{};
    });
  } catch (const Done&) {
  }
  std::fprintf(stderr, "  %s %s seed %llu: final success %.2f, best %.2f, coverage %.3f%s (%.0f s)\n",
               rl::to_string(c.method), rl::to_string(c.env),
               static_cast<unsigned long long>(*c.seed), st.final_success, st.best_success,
               st.final_coverage, st.hidden_found ? ", hidden found" : "", seconds_since(t0));
  return st;
}

std::vector<SeedStats> run_seeds(rl::Method m, rl::EnvKind env, bool stop_hidden = false) {
  std::vector<SeedStats> out;
  for (std::uint64_t s = 0; s < 5; ++s) out.push_back(run_seed(base_config(m, env, s), stop_hidden));
  return out;
}

template <class F>
double mean_of(const std::vector<SeedStats>& v, F f) {
  double s = 0.0;
  for (const auto& x : v) s += f(x);
  return s / double(v.size());
}

Outcome maze_result() {
  const auto mural = run_seeds(rl::Method::mural, rl::EnvKind::zigzag);
  const auto vice = run_seeds(rl::Method::vice, rl::EnvKind::zigzag);
  std::size_t reached = 0;
  for (const auto& s : mural) reached += s.best_success >= 0.8;
  const double ms = mean_of(mural, [](auto& s) { return s.final_success; });
  const double vs = mean_of(vice, [](auto& s) { return s.final_success; });
  const double mc = mean_of(mural, [](auto& s) { return s.final_coverage; });
  const double vc = mean_of(vice, [](auto& s) { return s.final_coverage; });
  return {reached >= 4 && vs < ms && vc < mc,
          "mural reached 0.8 on " + std::to_string(reached) + "/5 seeds; final success mural " +
              fmt(ms) + " vs vice " + fmt(vs) + "; coverage mural " + fmt(mc) + " vs vice " + fmt(vc)};
}

Outcome shuffled_ablation() {
  const auto cont = run_seeds(rl::Method::mural, rl::EnvKind::discrete_zigzag);
  const auto shuf = run_seeds(rl::Method::mural, rl::EnvKind::shuffled_zigzag);
  const auto vice = run_seeds(rl::Method::vice, rl::EnvKind::shuffled_zigzag);
  auto fin = [](auto& s) { return s.final_success; };
  const double c = mean_of(cont, fin), m = mean_of(shuf, fin), v = mean_of(vice, fin);
  return {m >= v && c >= m, "final success: mural-continuous " + fmt(c) + ", mural-shuffled " +
                                fmt(m) + ", vice-shuffled " + fmt(v)};
}

Outcome runtime_ordering() {
  experiment::BenchOptions o;  // (64, 64), 32 points, 100 queries each
  const auto rows = experiment::bench(o);
  const double ff = rows[0].latency_s, meta = rows[1].latency_s, naive = rows[2].latency_s;
  const double ratio = naive / meta;
  return {ratio >= 50.0 && ff <= meta,
          "per-query s: feedforward " + fmt(ff) + ", meta-NML " + fmt(meta) + ", naive " +
              fmt(naive) + "; naive/meta " + fmt(ratio)};
}

Outcome double_sided() {
  const auto mural = run_seeds(rl::Method::mural, rl::EnvKind::double_sided, true);
  const auto vice = run_seeds(rl::Method::vice, rl::EnvKind::double_sided, true);
  std::size_t m = 0, v = 0;
  for (const auto& s : mural) m += s.hidden_found;
  for (const auto& s : vice) v += s.hidden_found;
  return {m >= 3 && v <= 1, "hidden regions found: mural " + std::to_string(m) + "/5, vice " +
                                std::to_string(v) + "/5"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "tabular CNML exactness", tabular_exactness},
      {2, "CNML normalization and far-query uniformity", cnml_uniformity},
      {3, "meta-NML fidelity to naive CNML", meta_fidelity},
      {4, "importance-weighting identity", importance_identity},
      {5, "kernel values", kernel_values},
      {6, "gradient correctness", gradient_check},
      {7, "zigzag maze: mural vs vice", maze_result},
      {8, "shuffled maze ablation", shuffled_ablation},
      {9, "runtime ordering", runtime_ordering},
      {10, "double-sided maze", double_sided},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > 10) {
      std::cerr << "usage: acceptance [1-10 ...]\n";
      return 2;
    }
    wanted.push_back(n);
  }
  if (wanted.empty())
    for (int i = 1; i <= 10; ++i) wanted.push_back(i);

  bool ok = true;
  for (int n : wanted) {
    const Criterion& c = all[std::size_t(n - 1)];
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ok = ok && o.pass;
    std::cout << "criterion " << c.id << " " << (o.pass ? "PASS" : "FAIL") << " " << c.name
              << ": " << o.detail << std::endl;
  }
  return ok ? 0 : 1;
}
