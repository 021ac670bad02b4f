#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ecdg/error.hpp"
#include "ecdg/sampler.hpp"

using ecdg::CircuitConfig;
using ecdg::CurrentTable;
using ecdg::DiscreteDistribution;
using ecdg::Node;
using ecdg::OracleCurrentField;
using ecdg::StateIndex;

namespace {

DiscreteDistribution random_distribution(StateIndex n, ecdg::Rng& rng) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  for (auto& v : w) v = rng.uniform() + 0.05;
  return DiscreteDistribution::from_weights(w);
}

OracleCurrentField identity_field(const CircuitConfig& cfg, const DiscreteDistribution& q) {
  const auto n = static_cast<Eigen::Index>(cfg.states());
  CurrentTable t(static_cast<std::size_t>(cfg.layers()), Eigen::MatrixXd::Identity(n, n));
  return OracleCurrentField(cfg, t, q);
}

}  // namespace

TEST_CASE("movement rule arithmetic") {
  const CircuitConfig cfg(1, 3, 1, 1.0, 1.0);
  CurrentTable t{Eigen::MatrixXd::Zero(3, 3)};
  t[0](0, 1) = 0.3;
  t[0](0, 2) = 0.1;
  t[0](0, 0) = -0.2;  // flows into (0, 0), not out
  t[0](1, 2) = -0.5;  // (1, 2) has one outgoing edge, down to (0, 1)
  t[0](2, 0) = 0.7;
  const OracleCurrentField field(cfg, t, DiscreteDistribution::from_weights(Eigen::Vector3d(0.2, 0.3, 0.5)));

  const auto row = ecdg::transition_row(field, {0, 0});
  REQUIRE(row.targets.size() == 2);
  CHECK(row.targets[0] == Node{1, 1});
  const auto p = row.probabilities();
  CHECK(p[0] == doctest::Approx(0.75));
  CHECK(p[1] == doctest::Approx(0.25));
  CHECK(p[2] == 0.0);

  const auto sink = ecdg::transition_row(field, {1, 2});
  REQUIRE(sink.targets.size() == 1);
  CHECK(sink.targets[0] == Node{0, 1});
  CHECK(sink.probabilities().back() == doctest::Approx(0.5));

  const auto single = ecdg::transition_row(field, {0, 2});
  REQUIRE(single.targets.size() == 1);
  CHECK(single.probabilities()[0] == 1.0);

  ecdg::Rng rng(1);
  int to1 = 0;
  for (int i = 0; i < 100000; ++i) to1 += ecdg::step_general(field, {0, 0}, rng).to.state == 1;
  CHECK(std::abs(to1 / 1e5 - 0.75) < 0.005);
}

TEST_CASE("identity field") {
  const CircuitConfig cfg(4, 6, 1, 1.0, 1.0);
  ecdg::Rng rng(2);
  const auto p = random_distribution(6, rng);
  const auto field = identity_field(cfg, p);
  for (StateIndex x = 0; x < 6; ++x) {
    const auto t = ecdg::transport(field, x, rng);
    CHECK(t.terminated);
    CHECK(t.final_state() == x);
    CHECK(t.steps == 4);
    const auto f = ecdg::transport_forward(field, x, rng);
    CHECK(f.final_state() == x);
    CHECK(f.steps == 4);
  }
  const auto abs = ecdg::absorption_distribution(field, p);
  CHECK((abs.distribution.mass() - p.mass()).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("forward mode") {
  const CircuitConfig cfg(3, 4, 1, 1.0, 1.0);
  const auto u = DiscreteDistribution::uniform(4);
  CurrentTable pos(3, Eigen::MatrixXd::Constant(4, 4, 0.25));
  const OracleCurrentField uniform(cfg, pos, u);
  const auto batch = ecdg::transport_batch(uniform, std::vector<StateIndex>(100000, 1), {});
  CHECK(ecdg::total_variation(ecdg::histogram(batch.finals, 4), u) <= 0.01);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto& nodes = batch.trajectories[i].nodes;
    REQUIRE(nodes.size() == 4);
    for (int l = 0; l <= 3; ++l) CHECK(nodes[static_cast<std::size_t>(l)].layer == l);
  }

  // Negative currents are clamped; an all-nonpositive row keeps the state.
  CurrentTable neg(3, Eigen::MatrixXd::Constant(4, 4, -1.0));
  neg[1](2, 3) = 0.4;
  const OracleCurrentField mixed(cfg, neg, u);
  ecdg::Rng rng(3);
  const auto t = ecdg::transport_forward(mixed, 2, rng);
  CHECK(t.fallbacks == 2);
  CHECK(t.nodes[1].state == 2);
  CHECK(t.nodes[2].state == 3);
  CHECK(t.final_state() == 3);
}

TEST_CASE("oracle currents transport p to q") {
  const CircuitConfig cfg(3, 5, 1, 0.5, 2.0);
  ecdg::Rng rng(40);
  const auto p = random_distribution(5, rng);
  const auto q = random_distribution(5, rng);
  const OracleCurrentField field(cfg, p, q);

  const auto abs = ecdg::absorption_distribution(field, p);
  CHECK((abs.distribution.mass() - q.mass()).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(abs.max_accounting_error <= 1e-12);
  CHECK(abs.transient_mass < 1e-12);

  for (int l = 0; l <= 3; ++l)
    for (StateIndex x = 0; x < 5; ++x) {
      const auto pr = ecdg::transition_row(field, {l, x}).probabilities();
      double s = 0.0;
      for (double v : pr) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }

  const std::size_t N = 100000;
  const auto sources = ecdg::draw_samples(p, N, 5, "p").rows;
  ecdg::TransportOptions opt;
  opt.mode = ecdg::WalkMode::General;
  opt.seed = 9;
  const auto batch = ecdg::transport_batch(field, sources, opt);
  std::size_t longest = 0;
  for (const auto& t : batch.trajectories) longest = std::max(longest, t.steps);
  CHECK(longest <= 3 + 10);
  const auto hist = ecdg::histogram(batch.finals, 5);
  for (StateIndex x = 0; x < 5; ++x) CHECK(std::abs(hist(x) - q(x)) <= 3.0 * std::sqrt(q(x) / N));
}

TEST_CASE("batch results do not depend on threads") {
  const CircuitConfig cfg(3, 5, 1, 0.5, 2.0);
  const auto u = DiscreteDistribution::uniform(5);
  const OracleCurrentField field(cfg, u, DiscreteDistribution::point_mass(5, 3));
  const auto sources = ecdg::draw_samples(u, 5000, 1, "u").rows;
  for (auto mode : {ecdg::WalkMode::Forward, ecdg::WalkMode::General}) {
    ecdg::TransportOptions one{mode, 4, 1, false, 0};
    ecdg::TransportOptions many{mode, 4, 7, false, 0};
    CHECK(ecdg::transport_batch(field, sources, one).finals == ecdg::transport_batch(field, sources, many).finals);
  }
  setenv("ECDG_THREADS", "3", 1);
  CHECK(ecdg::default_thread_count() == 3);
  setenv("ECDG_THREADS", "zero", 1);
  CHECK(ecdg::default_thread_count() >= 1);
  unsetenv("ECDG_THREADS");
}

TEST_CASE("failures are reported") {
  // (0,0) -> (1,0) -> (0,1) -> (1,1) -> (0,0) with no sink weight on the loop.
  const CircuitConfig cfg(1, 3, 1, 1.0, 1.0);
  CurrentTable loop{Eigen::MatrixXd::Zero(3, 3)};
  loop[0](0, 0) = 1.0;
  loop[0](1, 0) = -1.0;
  loop[0](1, 1) = 1.0;
  loop[0](0, 1) = -1.0;
  const OracleCurrentField field(cfg, loop, DiscreteDistribution::point_mass(3, 2));
  ecdg::Rng rng(1);
  try {
    ecdg::transport(field, 0, rng);
    FAIL("expected a cycle error");
  } catch (const ecdg::NumericalError& e) {
    CHECK(std::string(e.what()).find("cycle") != std::string::npos);
  }
  CHECK_THROWS_AS(ecdg::absorption_distribution(field, DiscreteDistribution::point_mass(3, 0), 1e-12, 50),
                  ecdg::NumericalError);
  // (0, 2) has no outgoing current at all.
  CHECK_THROWS_AS(ecdg::step_general(field, {0, 2}, rng), ecdg::NumericalError);
  CHECK_THROWS_AS(ecdg::step_general(field, {2, 0}, rng), ecdg::ValidationError);
}

TEST_CASE("layer histograms and trajectory dump") {
  const CircuitConfig cfg(2, 3, 1, 1.0, 1.0);
  const auto u = DiscreteDistribution::uniform(3);
  const auto field = identity_field(cfg, u);
  const auto batch = ecdg::transport_batch(field, {0, 1, 1, 2}, {});
  const auto hist = ecdg::layer_histograms(batch, cfg);
  REQUIRE(hist.size() == 3);
  for (const auto& h : hist) CHECK(h(1) == 0.5);

  const auto path = std::filesystem::temp_directory_path() / "ecdg_test_sampler" / "traj.csv";
  ecdg::write_trajectories_csv(path, batch, 2);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "sample_id,step,layer,state_flat");
  std::getline(in, line);
  CHECK(line == "0,0,0,0");
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 6);
}
