#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "ecdg/error.hpp"
#include "ecdg/regressor.hpp"

using ecdg::CircuitConfig;
using ecdg::Coupling;
using ecdg::DiscreteDistribution;
using ecdg::Example;
using ecdg::RegressorParams;
using ecdg::StateIndex;

namespace {

std::vector<Example> random_batch(const CircuitConfig& cfg, std::size_t size, ecdg::Rng& rng) {
  std::vector<Example> b(size);
  for (auto& e : b) {
    e.layer = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cfg.layers())));
    e.x = rng.uniform_index(cfg.states());
    e.y = rng.uniform_index(cfg.states());
    e.target = rng.uniform(-1, 1);
  }
  return b;
}

double loss_only(const CircuitConfig& cfg, const RegressorParams& p, const std::vector<Example>& b) {
  const Eigen::VectorXd pred = ecdg::predict(cfg, p, b);
  double s = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) s += std::pow(pred[static_cast<Eigen::Index>(j)] - b[j].target, 2);
  return s / static_cast<double>(b.size());
}

}  // namespace

TEST_CASE("encoding") {
  const CircuitConfig cfg(10, 50, 1, 0.1, 100.0);
  const auto p = ecdg::init_params(cfg, 1);
  const Eigen::VectorXd e = ecdg::encode(cfg, p, 0, 49, 0);
  REQUIRE(e.size() == 4);
  CHECK(e[0] == doctest::Approx(0.01));
  CHECK(e[1] == doctest::Approx(0.99));
  CHECK(e[2] == p.embedding(0, 0));
  CHECK(e[3] == p.embedding(0, 1));

  const CircuitConfig two(4, 50, 2, 0.1, 10.0);
  const auto p2 = ecdg::init_params(two, 1);
  const Eigen::VectorXd same = ecdg::encode(two, p2, 1234, 1234, 3);
  CHECK(same.size() == 6);
  CHECK(same.head(2) == same.segment(2, 2));
  CHECK(same.tail(2) == p2.embedding.row(3).transpose());
}

TEST_CASE("initialization") {
  const CircuitConfig cfg(10, 50, 1, 0.1, 100.0);
  const auto p = ecdg::init_params(cfg, 3);
  REQUIRE(p.weights.size() == 4);
  CHECK(p.weights[0].rows() == 128);
  CHECK(p.weights[0].cols() == 4);
  CHECK(p.weights[3].rows() == 1);
  CHECK(p.weights[3].isZero(0.0));
  for (const auto& b : p.biases) CHECK(b.isZero(0.0));
  CHECK(p.embedding.rows() == 10);
  CHECK(p.embedding.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(p.weights[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 128.0));
  ecdg::Rng rng(1);
  const auto b = random_batch(cfg, 32, rng);
  CHECK(ecdg::predict(cfg, p, b).isZero(0.0));
  CHECK(p.parameter_count() == static_cast<std::size_t>(p.flatten().size()));
}

TEST_CASE("gradient matches central differences") {
  const CircuitConfig cfg(4, 7, 2, 0.1, 10.0);
  auto p = ecdg::init_params(cfg, 5);
  ecdg::Rng rng(6);
  for (Eigen::Index i = 0; i < p.weights[3].size(); ++i) p.weights[3](i) = rng.uniform(-0.3, 0.3);
  for (auto& b : p.biases)
    for (auto& v : b) v = rng.uniform(-0.1, 0.1);
  const auto batch = random_batch(cfg, 16, rng);

  RegressorParams grad;
  const double loss = ecdg::loss_and_gradient(cfg, p, batch, grad);
  CHECK(loss == doctest::Approx(loss_only(cfg, p, batch)).epsilon(1e-12));
  const Eigen::VectorXd g = grad.flatten();
  const Eigen::VectorXd theta = p.flatten();

  // 20 parameters: a few from every block, including the embedding.
  std::vector<Eigen::Index> picks;
  Eigen::Index offset = 0;
  std::vector<Eigen::Index> block_sizes;
  for (const auto& w : p.weights) block_sizes.push_back(w.size());
  for (const auto& b : p.biases) block_sizes.push_back(b.size());
  block_sizes.push_back(p.embedding.size());
  for (std::size_t k = 0; k < block_sizes.size(); ++k) {
    const int take = k + 1 == block_sizes.size() ? 4 : 2;
    for (int t = 0; t < take; ++t)
      picks.push_back(offset + static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(block_sizes[k]))));
    offset += block_sizes[k];
  }
  REQUIRE(picks.size() == 20);

  const double h = 1e-5;
  for (Eigen::Index i : picks) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    RegressorParams pp = p, pm = p;
    pp.unflatten(tp);
    pm.unflatten(tm);
    const double fd = (loss_only(cfg, pp, batch) - loss_only(cfg, pm, batch)) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
    CHECK(std::abs(fd - g[i]) / scale <= 1e-4);
  }
}

TEST_CASE("overfits a single example") {
  const CircuitConfig cfg(3, 5, 1, 0.1, 2.0);
  auto p = ecdg::init_params(cfg, 2);
  const std::vector<Example> one{{1, 2, 4, 0.37}};
  RegressorParams grad;
  for (int s = 0; s < 2000; ++s) {
    ecdg::loss_and_gradient(cfg, p, one, grad);
    ecdg::sgd_step(p, grad, 1e-2, 0.0);
  }
  CHECK(std::abs(ecdg::predict(cfg, p, 1, 2, 4) - 0.37) <= 1e-3);
}

TEST_CASE("training loop") {
  const CircuitConfig cfg(3, 5, 1, 0.1, 2.0);
  const auto c = Coupling::independent(DiscreteDistribution::uniform(5), DiscreteDistribution::point_mass(5, 2));
  ecdg::TrainConfig tc;
  tc.steps = 30;
  tc.batch = 16;
  tc.pair_batch = 8;
  tc.seed = 4;

  SUBCASE("zero learning rate leaves parameters alone") {
    auto z = tc;
    z.learning_rate = 0.0;
    const auto res = ecdg::train(cfg, c, z);
    CHECK(res.params.flatten() == ecdg::init_params(cfg, ecdg::derive_seed(z.seed, 0)).flatten());
    CHECK(res.loss.size() == 30);
  }
  SUBCASE("identical seeds reproduce bit for bit") {
    const auto a = ecdg::train(cfg, c, tc);
    const auto b = ecdg::train(cfg, c, tc);
    CHECK(a.loss == b.loss);
    CHECK(a.params.flatten() == b.params.flatten());
    auto other = tc;
    other.seed = 5;
    CHECK(ecdg::train(cfg, c, other).loss != a.loss);
  }
  SUBCASE("weight decay is not a no-op and spares biases") {
    auto big = tc;
    big.learning_rate = 0.05;
    auto no_decay = big;
    no_decay.weight_decay = 0.0;
    const auto a = ecdg::train(cfg, c, big);
    const auto b = ecdg::train(cfg, c, no_decay);
    CHECK(a.loss != b.loss);

    // One step by hand: decay touches weight matrices only.
    auto p = ecdg::init_params(cfg, 1);
    auto grad = p.zeros_like();
    const auto before = p;
    ecdg::sgd_step(p, grad, 0.1, 0.5);
    CHECK(p.weights[0].isApprox(0.95 * before.weights[0]));
    CHECK(p.embedding == before.embedding);
    CHECK(p.biases[0] == before.biases[0]);
  }
  SUBCASE("deterministic targets can be fitted") {
    // Point-mass coupling: the Monte Carlo target of every edge is exact.
    const auto point = Coupling::paired({{1, 3}}, 5);
    auto fit = tc;
    fit.steps = 3000;
    fit.batch = 64;
    fit.learning_rate = 5e-2;
    fit.target_scale = 10.0;
    const auto res = ecdg::train(cfg, point, fit);
    const auto [head, tail] = ecdg::loss_window_means(res.loss);
    CHECK(tail < 0.05 * head);
  }
}

TEST_CASE("non-finite values abort") {
  const CircuitConfig cfg(3, 5, 1, 0.1, 2.0);
  auto p = ecdg::init_params(cfg, 2);
  p.weights[3](0, 0) = std::nan("");
  RegressorParams grad;
  const std::vector<Example> one{{0, 1, 1, 0.0}};
  CHECK_THROWS_AS(ecdg::loss_and_gradient(cfg, p, one, grad), ecdg::NumericalError);
}

TEST_CASE("checkpoint round trip and learned field") {
  const CircuitConfig cfg(3, 4, 2, 0.1, 2.0);
  const auto c = Coupling::independent(DiscreteDistribution::uniform(16), DiscreteDistribution::uniform(16));
  ecdg::TrainConfig tc;
  tc.steps = 5;
  tc.batch = 8;
  tc.target_scale = 3.0;
  const auto res = ecdg::train(cfg, c, tc);
  const auto dir = std::filesystem::temp_directory_path() / "ecdg_test_regressor";
  std::filesystem::remove_all(dir);
  ecdg::save_checkpoint(dir / "ck.json", cfg, res.params, tc);
  const auto ck = ecdg::load_checkpoint(dir / "ck.json");
  CHECK(ck.cfg == cfg);
  CHECK(ck.params.flatten() == res.params.flatten());
  CHECK(ck.train.target_scale == 3.0);
  CHECK(ck.train.steps == 5);
  ecdg::write_loss_csv(dir / "loss.csv", res.loss);
  CHECK(std::filesystem::exists(dir / "loss.csv"));
  CHECK_THROWS_AS(ecdg::load_checkpoint(dir / "missing.json"), ecdg::ValidationError);
  CHECK_THROWS_AS(ecdg::load_checkpoint(dir / "loss.csv"), ecdg::ValidationError);

  const ecdg::LearnedCurrentField field(cfg, ck.params, 3.0, DiscreteDistribution::uniform(16));
  std::vector<double> row(16), col(16);
  field.forward_currents(1, 5, row);
  field.backward_currents(2, 5, col);
  for (StateIndex y = 0; y < 16; ++y) {
    CHECK(row[y] == doctest::Approx(ecdg::predict(cfg, ck.params, 1, 5, y) / 3.0).epsilon(1e-14));
    CHECK(col[y] == doctest::Approx(ecdg::predict(cfg, ck.params, 1, y, 5) / 3.0).epsilon(1e-14));
    CHECK(field.current(1, 5, y) == row[y]);
  }
}
