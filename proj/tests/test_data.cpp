#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "ecdg/distribution.hpp"
#include "ecdg/error.hpp"

using ecdg::DiscreteDistribution;

namespace {

std::filesystem::path scratch_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "ecdg_test_data" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

// Expected TV between two independent empirical tables of sizes n1 and n2
// drawn from p, using E|N(0, s^2)| = s sqrt(2/pi).
double expected_sampling_tv(const Eigen::VectorXd& p, double n1, double n2) {
  double sum = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    sum += std::sqrt(2.0 / std::numbers::pi * p[k] * (1.0 - p[k]) * (1.0 / n1 + 1.0 / n2));
  return 0.5 * sum;
}

}  // namespace

TEST_CASE("1d pair tables") {
  const auto pair = ecdg::make_1d_pair(50, 7, 1000);
  REQUIRE(pair.source.size() == 50);
  for (ecdg::StateIndex k = 0; k < 50; ++k) CHECK(pair.source(k) == doctest::Approx(0.02).epsilon(1e-14));
  CHECK(std::abs(pair.target.mass().sum() - 1.0) <= 1e-12);

  // Largest two masses are the bins either side of the mean, and equal.
  std::vector<ecdg::StateIndex> order(50);
  for (ecdg::StateIndex k = 0; k < 50; ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return pair.target(a) > pair.target(b); });
  CHECK(std::min(order[0], order[1]) == 24);
  CHECK(std::max(order[0], order[1]) == 25);
  CHECK(pair.target(24) == doctest::Approx(pair.target(25)).epsilon(1e-14));
  // Phi(1) - Phi(0)
  CHECK(pair.target(25) == doctest::Approx(0.3413447460685429).epsilon(1e-12));
  CHECK(pair.source_samples.rows.size() == 1000);
}

TEST_CASE("2d pair tables") {
  const auto a = ecdg::make_2d_pair(50, 11, 100000);
  const auto b = ecdg::make_2d_pair(50, 11, 100000);
  CHECK(a.source.size() == 2500);
  CHECK(a.target.size() == 2500);
  CHECK(std::abs(a.source.mass().sum() - 1.0) <= 1e-12);
  CHECK(std::abs(a.target.mass().sum() - 1.0) <= 1e-12);
  CHECK(a.source.mass() == b.source.mass());
  CHECK(a.target.mass() == b.target.mass());
  CHECK(a.source_clamped_fraction < 1e-3);
  CHECK(a.target_clamped_fraction < 1e-3);
}

TEST_CASE("2d tables are stable under resampling") {
  const auto small = ecdg::make_2d_pair(50, 3, 100000);
  const auto large = ecdg::make_2d_pair(50, 4, 1000000);
  // A 1e5-point table carries sampling noise of its own: ~0.021 TV for the
  // roll (~350 occupied bins) and ~0.033 for the moons (~1000 bins). Bound
  // each against its expected noise floor.
  for (bool target : {false, true}) {
    const auto& a = target ? small.target : small.source;
    const auto& b = target ? large.target : large.source;
    const double floor = expected_sampling_tv(b.mass(), 1e5, 1e6);
    CHECK(floor < 0.04);
    CHECK(ecdg::total_variation(a, b) <= 1.15 * floor);
  }
}

TEST_CASE("total variation") {
  const auto d0 = DiscreteDistribution::point_mass(4, 0);
  const auto d1 = DiscreteDistribution::point_mass(4, 1);
  CHECK(ecdg::total_variation(d0, d0) == 0.0);
  CHECK(ecdg::total_variation(d0, d1) == 1.0);
  CHECK_THROWS_AS(ecdg::total_variation(d0, DiscreteDistribution::uniform(3)), ecdg::ValidationError);

  ecdg::Rng rng(5);
  Eigen::VectorXd wp(37), wq(37);
  for (int i = 0; i < 37; ++i) {
    wp[i] = rng.uniform();
    wq[i] = rng.uniform();
  }
  const auto p = DiscreteDistribution::from_weights(wp);
  const auto q = DiscreteDistribution::from_weights(wq);
  double brute = 0.0;
  for (ecdg::StateIndex i = 0; i < 37; ++i) brute += std::abs(p(i) - q(i));
  CHECK(std::abs(ecdg::total_variation(p, q) - 0.5 * brute) <= 1e-15);
}

TEST_CASE("histogram") {
  const ecdg::CircuitConfig cfg(1, 5, 1, 1.0, 1.0);
  ecdg::SampleSet one{{3}, {}};
  CHECK(ecdg::histogram(one, cfg)(3) == 1.0);

  ecdg::SampleSet set{{0, 1, 1, 4}, {}};
  ecdg::SampleSet twice{{0, 1, 1, 4, 0, 1, 1, 4}, {}};
  CHECK(ecdg::histogram(set, cfg).mass() == ecdg::histogram(twice, cfg).mass());
  CHECK(ecdg::histogram(set, cfg).mass().sum() * 4.0 == doctest::Approx(4.0));
  CHECK_THROWS_AS(ecdg::histogram(ecdg::SampleSet{}, cfg), ecdg::ValidationError);
  CHECK_THROWS_AS(ecdg::histogram(ecdg::SampleSet{{5}, {}}, cfg), ecdg::ValidationError);
}

TEST_CASE("distribution validation and sampling") {
  CHECK_THROWS_AS(DiscreteDistribution(Eigen::Vector2d(0.5, 0.6)), ecdg::ValidationError);
  CHECK_THROWS_AS(DiscreteDistribution(Eigen::Vector2d(1.5, -0.5)), ecdg::ValidationError);
  CHECK_THROWS_AS(DiscreteDistribution::from_weights(Eigen::Vector2d(0.0, 0.0)), ecdg::ValidationError);

  const auto pair = ecdg::make_1d_pair(50, 1, 10);
  for (const auto* d : {&pair.source, &pair.target}) {
    const auto s = ecdg::draw_samples(*d, 1000000, 99, "test");
    CHECK(ecdg::total_variation(ecdg::histogram(s.rows, 50), *d) <= 0.005);
  }

  // Zero-mass states are never drawn.
  const DiscreteDistribution gap(Eigen::Vector3d(0.5, 0.0, 0.5));
  ecdg::Rng rng(1);
  for (int i = 0; i < 10000; ++i) CHECK(gap.sample(rng) != 1);
  CHECK(gap.support() == std::vector<ecdg::StateIndex>{0, 2});
}

TEST_CASE("csv round trip") {
  const auto dir = scratch_dir("csv");
  const ecdg::CircuitConfig cfg(2, 7, 2, 1.0, 1.0);
  ecdg::Rng rng(8);
  Eigen::VectorXd w(49);
  for (int i = 0; i < 49; ++i) w[i] = rng.uniform();
  const auto d = DiscreteDistribution::from_weights(w);
  ecdg::write_distribution_csv(dir / "d.csv", d);
  CHECK(ecdg::read_distribution_csv(dir / "d.csv", 49).mass() == d.mass());

  const auto s = ecdg::draw_samples(d, 200, 4, "test");
  ecdg::write_samples_csv(dir / "s.csv", s, cfg);
  CHECK(ecdg::read_samples_csv(dir / "s.csv", cfg).rows == s.rows);
  CHECK_THROWS_AS(ecdg::read_distribution_csv(dir / "missing.csv", 49), ecdg::ValidationError);
}
