#include <catch_amalgamated.hpp>

#include <filesystem>

#include "mural/net/checkpoint.hpp"
#include "mural/net/optimizer.hpp"
#include "mural/rng.hpp"
#include "support/oracles.hpp"

using namespace mural;
using Catch::Approx;

namespace {

const net::MlpArchitecture kSmall{2, {4}, net::Activation::relu};

struct Batch {
  std::vector<std::vector<double>> xs;
  std::vector<net::Sample> samples;
};

Batch random_batch(std::size_t dim, std::size_t n, Rng& rng) {
  Batch b;
  b.xs.resize(n);
  for (auto& x : b.xs)
    for (std::size_t d = 0; d < dim; ++d) x.push_back(4.0 * uniform01(rng) - 2.0);
  for (auto& x : b.xs)
    b.samples.push_back({x, double(uniform_index(rng, 2)), 0.1 + uniform01(rng)});
  return b;
}

}  // namespace

TEST_CASE("init_model is deterministic per seed", "[net]") {
  const auto a = net::init_model(kSmall, 7), b = net::init_model(kSmall, 7);
  CHECK(a.params == b.params);
  CHECK(net::init_model(kSmall, 8).params != a.params);
}

TEST_CASE("parameter count counts weights and biases", "[net]") {
  // 2*4 + 4 for the hidden layer, 4*1 + 1 for the output.
  CHECK(kSmall.parameter_count() == 17);
  CHECK(net::init_model(kSmall, 0).params.size() == 17);
}

TEST_CASE("invalid architectures are rejected", "[net]") {
  CHECK_THROWS_AS(net::init_model({0, {4}}, 0), std::invalid_argument);
  CHECK_THROWS_AS(net::init_model({2, {4, 0}}, 0), std::invalid_argument);
}

TEST_CASE("forward range and dimension checks", "[net]") {
  net::MlpModel zero = net::init_model(kSmall, 1);
  std::fill(zero.params.begin(), zero.params.end(), 0.0);
  const std::vector<double> x{3.0, -1.0};
  CHECK(net::forward(zero, x) == 0.5);

  const auto m = net::init_model({2, {16, 16}}, 3);
  Rng rng = make_rng(3, "test");
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> q{200.0 * uniform01(rng) - 100.0, 200.0 * uniform01(rng) - 100.0};
    const double p = net::forward(m, q);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  CHECK_THROWS_AS(net::forward(m, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("weighted BCE values", "[net]") {
  net::MlpModel zero = net::init_model(kSmall, 1);
  std::fill(zero.params.begin(), zero.params.end(), 0.0);
  const std::vector<double> x{0.5, 0.5};
  const net::Sample one[] = {{x, 1.0, 1.0}};
  CHECK(net::weighted_bce_loss(zero, one) == Approx(std::log(2.0)).epsilon(1e-12));

  // A large output bias makes the prediction confident.
  net::MlpModel sure = zero;
  sure.params.back() = 40.0;
  CHECK(net::weighted_bce_loss(sure, one) < 1e-6);

  Rng rng = make_rng(5, "test");
  const auto m = net::init_model(kSmall, 5);
  Batch b = random_batch(2, 12, rng);
  const double l = net::weighted_bce_loss(m, b.samples);
  for (auto& s : b.samples) s.w *= 2.0;
  CHECK(net::weighted_bce_loss(m, b.samples) == Approx(2.0 * l).epsilon(1e-14));
}

TEST_CASE("gradient matches central finite differences", "[net]") {
  Rng rng = make_rng(11, "test");
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t dim = 1 + uniform_index(rng, 3);
    const net::MlpArchitecture arch{dim, {3 + uniform_index(rng, 5), 2 + uniform_index(rng, 4)}};
    const auto m = oracle::random_model(arch, 100 + trial);
    const Batch b = random_batch(dim, 8, rng);
    const auto g = net::gradient(m, b.samples);
    const auto fd = oracle::fd_gradient(m, b.samples);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(oracle::rel_error(g[i], fd[i]) <= 1e-4);
  }
}

TEST_CASE("gradient of empty and concatenated batches", "[net]") {
  Rng rng = make_rng(12, "test");
  const auto m = net::init_model(kSmall, 12);
  const auto empty = net::gradient(m, std::span<const net::Sample>{});
  CHECK(std::all_of(empty.begin(), empty.end(), [](double v) { return v == 0.0; }));

  const Batch a = random_batch(2, 5, rng), b = random_batch(2, 7, rng);
  std::vector<net::Sample> both = a.samples;
  both.insert(both.end(), b.samples.begin(), b.samples.end());
  const auto ga = net::gradient(m, a.samples), gb = net::gradient(m, b.samples);
  const auto gab = net::gradient(m, both);
  for (std::size_t i = 0; i < gab.size(); ++i) CHECK(gab[i] == Approx(ga[i] + gb[i]).margin(1e-12));
}

TEST_CASE("optimizer steps", "[net]") {
  std::vector<double> p{1.0};
  net::Optimizer::sgd(0.1).step(p, std::vector<double>{2.0});
  CHECK(p[0] == Approx(0.8).epsilon(1e-15));

  p = {1.0};
  net::Optimizer::sgd(0.1, 0.5).step(p, std::vector<double>{0.0});
  CHECK(p[0] == Approx(0.95).epsilon(1e-15));

  for (auto opt : {net::Optimizer::sgd(0.0), net::Optimizer::adam(0.0)}) {
    std::vector<double> q{1.0, -2.0};
    opt.step(q, std::vector<double>{3.0, 4.0});
    CHECK(q == std::vector<double>{1.0, -2.0});
  }

  std::vector<double> bad{1.0};
  CHECK_THROWS_AS(net::Optimizer::sgd(0.1).step(bad, std::vector<double>{std::nan("")}),
                  std::invalid_argument);
  CHECK_THROWS_AS(net::Optimizer::sgd(0.1).step(bad, std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("SGD decreases the loss on a separable pair", "[net]") {
  auto m = net::init_model(kSmall, 21);
  const std::vector<double> a{-1.0, -1.0}, b{1.0, 1.0};
  const net::Sample batch[] = {{a, 0.0, 1.0}, {b, 1.0, 1.0}};
  auto opt = net::Optimizer::sgd(0.05);
  double prev = net::weighted_bce_loss(m, batch);
  for (int i = 0; i < 100; ++i) {
    opt.step(m.params, net::gradient(m, batch));
    const double cur = net::weighted_bce_loss(m, batch);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("training is deterministic", "[net]") {
  auto train = [] {
    Rng rng = make_rng(4, "test");
    const Batch b = random_batch(2, 16, rng);
    auto m = net::init_model({2, {8, 8}}, 4);
    auto opt = net::Optimizer::adam(1e-2);
    for (int i = 0; i < 50; ++i) opt.step(m.params, net::gradient(m, b.samples));
    return m.params;
  };
  CHECK(train() == train());
}

TEST_CASE("snapshot, restore and checkpoint files", "[net]") {
  auto m = net::init_model({2, {8, 4}}, 9);
  const auto snap = net::snapshot(m);
  const auto original = m;
  Rng rng = make_rng(9, "test");
  std::vector<std::vector<double>> xs(100);
  for (auto& x : xs) x = {8.0 * uniform01(rng) - 4.0, 8.0 * uniform01(rng) - 4.0};
  const auto r = net::restore(snap);
  for (const auto& x : xs) CHECK(net::forward(r, x) == net::forward(m, x));

  m.params[0] += 1.0;
  CHECK(net::restore(snap) == original);

  const auto path = std::filesystem::temp_directory_path() / "mural_test_model.ckpt";
  net::save_checkpoint(original, path.string());
  CHECK(net::load_checkpoint(path.string()) == original);
  std::filesystem::remove(path);

  std::string bytes = net::encode_checkpoint(original);
  CHECK(bytes.rfind("mlp-v1 2 8,4 9", 0) == 0);
  CHECK_THROWS(net::decode_checkpoint(bytes.substr(0, bytes.size() - 3)));
  CHECK_THROWS(net::decode_checkpoint("mlp-v2 2 8 1\n"));
}
