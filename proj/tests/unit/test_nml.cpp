#include <catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "mural/experiment/analysis.hpp"
#include "mural/nml/cnml.hpp"
#include "mural/nml/meta_nml.hpp"
#include "mural/nml/mle.hpp"
#include "mural/nml/tabular.hpp"
#include "support/oracles.hpp"

using namespace mural;
using Catch::Approx;

namespace {

nml::LabeledDataset two_clusters(std::size_t per_label, double sep, std::uint64_t seed) {
  Rng rng = make_rng(seed, "clusters");
  std::normal_distribution<double> g(0.0, 0.3);
  nml::LabeledDataset d(2);
  for (std::size_t i = 0; i < per_label; ++i) {
    const double a[2] = {-sep + g(rng), g(rng)};
    d.add(a, 0);
    const double b[2] = {sep + g(rng), g(rng)};
    d.add(b, 1);
  }
  return d;
}

double mean_abs_shift(const net::MlpModel& before, const net::MlpModel& after) {
  double s = 0.0;
  for (auto p : experiment::grid_centers(10)) {
    const double x[2] = {p.x, p.y};
    s += std::abs(net::forward(after, x) - net::forward(before, x));
  }
  return s / 100.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tabular
// ---------------------------------------------------------------------------

TEST_CASE("tabular CNML closed form", "[nml]") {
  CHECK(nml::cnml_tabular_exact({0, 0}) == nml::Rational{1, 2});
  CHECK(nml::cnml_tabular_exact({5, 0}) == nml::Rational{1, 7});
  CHECK(nml::cnml_tabular_exact({10, 3}) == nml::Rational{4, 15});
  nml::TabularCounts empty;
  CHECK(nml::cnml_tabular(empty, 42) == 0.5);
}

TEST_CASE("tabular CNML equals augment-and-refit on 0..50", "[nml]") {
  for (std::uint64_t n = 0; n <= 50; ++n)
    for (std::uint64_t g = 0; g <= 50; ++g) {
      const auto ref = oracle::tabular_cnml_refit(n, g);
      const auto got = nml::cnml_tabular_exact({n, g});
      REQUIRE(got.num == ref.num);
      REQUIRE(got.den == ref.den);
    }
}

TEST_CASE("tabular CNML is monotone in counts", "[nml]") {
  for (std::uint64_t a = 0; a < 30; ++a)
    for (std::uint64_t b = 0; b < 30; ++b) {
      CHECK(nml::cnml_tabular({a + 1, b}) < nml::cnml_tabular({a, b}));
      CHECK(nml::cnml_tabular({a, b + 1}) > nml::cnml_tabular({a, b}));
    }
}

// ---------------------------------------------------------------------------
// Meta tasks, kernel and importance weights
// ---------------------------------------------------------------------------

TEST_CASE("meta tasks cover every point with both labels", "[nml]") {
  CHECK(nml::build_meta_tasks(0).empty());
  const auto t = nml::build_meta_tasks(4);
  CHECK(t.size() == 8);
  std::set<std::pair<std::size_t, int>> seen;
  for (const auto& k : t) seen.insert({k.index, k.proposed_label});
  CHECK(seen.size() == 8);
}

TEST_CASE("kernel weight values", "[nml]") {
  const double o[2] = {0.3, -0.2};
  CHECK(nml::kernel_weight(o, o, 0.5) == 1.0);
  const double at_lambda[2] = {0.3 + 0.5, -0.2};
  CHECK(nml::kernel_weight(at_lambda, o, 0.5) == Approx(0.1003).margin(1e-3));
  const double at_2lambda[2] = {0.3, -0.2 + 1.0};
  CHECK(nml::kernel_weight(at_2lambda, o, 0.5) == Approx(std::exp(-4.6)).epsilon(1e-12));
  double prev = 2.0;
  for (double d = 0.0; d < 3.0; d += 0.05) {
    const double x[2] = {0.3 + d, -0.2};
    const double w = nml::kernel_weight(x, o, 0.5);
    CHECK(w < prev);
    prev = w;
  }
  CHECK_THROWS(nml::kernel_weight(o, o, 0.0));
}

TEST_CASE("query importance weight", "[nml]") {
  CHECK(nml::query_importance_weight(63, 64) == 1.0);
  CHECK(nml::query_importance_weight(126, 64) == 0.5);
  CHECK(nml::query_importance_weight(2048, 64) == Approx(1.0 / 33.0).epsilon(1e-15));
  CHECK_THROWS(nml::query_importance_weight(0, 64));
  CHECK_THROWS(nml::query_importance_weight(10, 1));
}

TEST_CASE("one importance-weighted epoch equals the augmented loss", "[nml]") {
  Rng rng = make_rng(31, "test");
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 300);
    const std::size_t b = 2 + uniform_index(rng, 80);
    const auto m = net::init_model({2, {8}}, 31 + trial);
    std::vector<std::array<double, 2>> xs(n + 1);
    for (auto& x : xs) x = {8.0 * uniform01(rng) - 4.0, 8.0 * uniform01(rng) - 4.0};
    std::vector<net::Sample> data;
    for (std::size_t i = 0; i < n; ++i) data.push_back({xs[i], double(uniform_index(rng, 2)), 1.0});
    const net::Sample query{xs[n], 1.0, 1.0};

    std::vector<net::Sample> augmented = data;
    augmented.push_back(query);
    const double plain = net::weighted_bce_loss(m, augmented);

    const double w = nml::query_importance_weight(n, b);
    double epoch = 0.0;
    for (std::size_t start = 0; start < n; start += b - 1) {
      std::vector<net::Sample> batch(data.begin() + long(start),
                                     data.begin() + long(std::min(n, start + b - 1)));
      batch.push_back({query.x, query.y, w});
      epoch += net::weighted_bce_loss(m, batch);
    }
    CHECK(std::abs(epoch - plain) <= 1e-9 * std::max(1.0, plain));
  }
}

// ---------------------------------------------------------------------------
// MLE
// ---------------------------------------------------------------------------

TEST_CASE("MLE separates well-separated clusters", "[nml]") {
  const auto d = two_clusters(50, 2.0, 1);
  nml::MleOptions o;
  o.learning_rate = 1e-2;
  o.batch_size = 32;
  const auto r = nml::mle_train(net::init_model({2, {32, 32}}, 1), d, 200, o);
  CHECK(nml::accuracy(r.model, d) >= 0.98);

  // Far from the data the MLE stays confident.
  const double far[2] = {40.0, 3.0};
  const double p = net::forward(r.model, far);
  CHECK(std::max(p, 1.0 - p) > 0.9);
}

TEST_CASE("MLE mixup off matches plain training and single class is rejected", "[nml]") {
  const auto d = two_clusters(10, 1.0, 2);
  nml::MleOptions o;
  o.seed = 3;
  const auto init = net::init_model({2, {8}}, 3);
  CHECK(nml::mle_train(init, d, 5, o).model == nml::mle_train(init, d, 5, o).model);

  nml::LabeledDataset one(2);
  const double x[2] = {0.0, 0.0};
  one.add(x, 1);
  one.add(x, 1);
  CHECK_THROWS_AS(nml::mle_train(init, one, 1, o), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Naive CNML
// ---------------------------------------------------------------------------

TEST_CASE("naive CNML normalizes and is pure", "[nml]") {
  const auto d = two_clusters(4, 1.0, 5);
  const net::MlpArchitecture arch{2, {8}};
  const auto copy = d;
  nml::ConvergenceCriteria c;
  c.max_steps = 500;
  const double q[2] = {0.2, 0.1};
  const auto p = nml::cnml_naive(arch, d, q, c);
  CHECK(std::abs(p.p_label0 + p.p_label1 - 1.0) <= 1e-9);
  CHECK(p.p_label1 == Approx(p.raw_likelihood1 / (p.raw_likelihood0 + p.raw_likelihood1)));
  const auto again = nml::cnml_naive(arch, d, q, c);
  CHECK(again.p_label1 == p.p_label1);
  CHECK(d.size() == copy.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(std::equal(d.point(i).begin(), d.point(i).end(), copy.point(i).begin()));
    CHECK(d.label(i) == copy.label(i));
  }
}

TEST_CASE("naive CNML on a stack of positives", "[nml]") {
  // Ten identical positives, negatives far away: both refits agree with the
  // data at the stack, so the label-1 likelihood dominates.
  nml::LabeledDataset d(2);
  const double pos[2] = {1.0, 1.0};
  for (int i = 0; i < 10; ++i) d.add(pos, 1);
  const double negs[][2] = {{-3.0, -3.0}, {-3.0, -2.5}, {-2.5, -3.0}};
  for (auto& n : negs) d.add(n, 0);
  const auto p = nml::cnml_naive({2, {16}}, d, pos);
  CHECK(p.p_label1 >= 0.8);

  // Independent check: refit each augmented set and normalize by hand.
  nml::ConvergenceCriteria c;
  double raw[2];
  for (int y = 0; y < 2; ++y) {
    auto batch = d.samples();
    batch.push_back({pos, double(y), 1.0});
    const auto fit = nml::fit_to_convergence(net::init_model({2, {16}}, c.init_seed), batch, c);
    const double p1 = net::forward(fit.model, pos);
    raw[y] = y ? p1 : 1.0 - p1;
  }
  CHECK(p.p_label1 == Approx(raw[1] / (raw[0] + raw[1])).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// Meta-NML
// ---------------------------------------------------------------------------

TEST_CASE("meta-NML queries normalize, are pure and repeatable", "[nml]") {
  const auto d = two_clusters(16, 1.5, 6);
  const auto m = net::init_model({2, {16, 16}}, 6);
  const auto before = m;
  nml::MetaNmlConfig cfg;
  cfg.seed = 9;
  for (auto p : experiment::grid_centers(4)) {
    const double x[2] = {p.x, p.y};
    const auto a = nml::cnml_meta_query(m, d, x, cfg);
    const auto b = nml::cnml_meta_query(m, d, x, cfg);
    CHECK(std::abs(a.p_label0 + a.p_label1 - 1.0) <= 1e-9);
    CHECK(a.p_label1 == b.p_label1);
  }
  CHECK(m == before);
  const double bad[3] = {0, 0, 0};
  CHECK_THROWS(nml::cnml_meta_query(m, d, std::span<const double>(bad, 3), cfg));
}

TEST_CASE("meta_train warm start and rejection", "[nml]") {
  const auto d = two_clusters(8, 1.5, 7);
  const auto a = net::init_model({2, {8}}, 1), b = net::init_model({2, {8}}, 2);
  nml::MetaNmlConfig cfg;
  CHECK(nml::meta_train(a, d, cfg, 0, b).model == b);
  CHECK_THROWS(nml::meta_train(a, d, cfg, 1, net::init_model({2, {9}}, 2)));
  nml::LabeledDataset one(2);
  const double x[2] = {0.0, 0.0};
  one.add(x, 0);
  CHECK_THROWS_AS(nml::meta_train(a, one, cfg, 1), std::invalid_argument);
}

TEST_CASE("meta-training lowers the post-adaptation task loss", "[nml]") {
  const auto d = two_clusters(16, 1.5, 8);
  nml::MetaNmlConfig cfg;
  cfg.inner_lr = 0.1;
  cfg.seed = 8;
  const auto init = net::init_model({2, {32, 32}}, 8);
  const auto trained = nml::meta_train(init, d, cfg, 100).model;
  // Held-out tasks: fresh query points, both labels.
  nml::LabeledDataset pool(2);
  Rng rng = make_rng(8, "held-out");
  for (int i = 0; i < 10; ++i) {
    const double x[2] = {8.0 * uniform01(rng) - 4.0, 8.0 * uniform01(rng) - 4.0};
    pool.add(x, 0);
  }
  const auto tasks = nml::build_meta_tasks(pool);
  CHECK(nml::mean_post_adaptation_loss(trained, d, pool, tasks, cfg) <
        nml::mean_post_adaptation_loss(init, d, pool, tasks, cfg));
}

TEST_CASE("one adaptation step moves the meta-learned model more than an MLE fit", "[nml]") {
  const auto d = two_clusters(16, 1.5, 10);
  nml::MetaNmlConfig cfg;
  cfg.seed = 10;
  const net::MlpArchitecture arch{2, {32, 32}};
  const auto meta = nml::meta_train(net::init_model(arch, 10), d, cfg, 200).model;
  nml::MleOptions o;
  o.learning_rate = 1e-2;
  o.batch_size = 32;
  const auto fit = nml::mle_train(net::init_model(arch, 10), d, 2000, o);
  REQUIRE(fit.final_loss < 1e-4);
  const auto& mle = fit.model;

  // Same single step for both: a far query labelled 1.
  const double xq[2] = {-3.5, 3.5};
  auto shift = [&](const net::MlpModel& m) {
    Rng rng(1);
    return mean_abs_shift(m, nml::adapt(m, d, xq, 1, cfg, 1, rng));
  };
  // Measured about 3.6x here; the ordering with a margin is what is asserted.
  CHECK(shift(meta) >= 2.0 * shift(mle));
}

TEST_CASE("meta-NML approaches naive CNML with more steps", "[nml]") {
  const auto d = nml::load_dataset_csv(std::string(MURAL_DATA_DIR) + "/reference_dataset.csv");
  const auto gaps = experiment::convergence_gaps(d, {0, 1, 2, 5});
  for (double g : gaps) CHECK(g >= 0.0);
  CHECK(gaps[0] >= gaps[1]);
  CHECK(gaps[1] >= gaps[2]);
  CHECK(gaps[2] >= gaps[3]);
  CHECK(gaps[1] <= 0.15);
}

TEST_CASE("dataset CSV round trip", "[nml]") {
  const auto d = two_clusters(3, 1.0, 12);
  std::stringstream ss;
  nml::write_dataset_csv(d, ss);
  CHECK(ss.str().rfind("x0,x1,label\n", 0) == 0);
  const auto back = nml::read_dataset_csv(ss);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.label(i) == d.label(i));
    CHECK(std::equal(d.point(i).begin(), d.point(i).end(), back.point(i).begin()));
  }
}
