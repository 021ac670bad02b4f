#include <doctest.h>

#include <nlohmann/json.hpp>
#include <vector>

#include "ecdg/circuit.hpp"
#include "ecdg/error.hpp"

using ecdg::CircuitConfig;

TEST_CASE("resistance") {
  const CircuitConfig cfg(10, 50, 1, 0.1, 100.0);
  CHECK(ecdg::resistance(cfg, 7, 7) == 0.1);
  CHECK(ecdg::resistance(cfg, 7, 8) == 100.0);
  CHECK(ecdg::resistance(cfg, 8, 7) == 100.0);
  const CircuitConfig same(2, 4, 1, 5.0, 5.0);
  for (ecdg::StateIndex x = 0; x < 4; ++x)
    for (ecdg::StateIndex y = 0; y < 4; ++y) CHECK(ecdg::resistance(same, x, y) == 5.0);
}

TEST_CASE("flatten and unflatten") {
  const CircuitConfig cfg(4, 50, 2, 0.1, 10.0);
  const std::vector<int> origin{0, 0}, corner{49, 49};
  CHECK(ecdg::flatten(cfg, origin).flat == 0);
  CHECK(ecdg::flatten(cfg, corner).flat == 2499);
  CHECK(ecdg::unflatten(cfg, 50).categories == std::vector<int>{0, 1});

  // Against plain loop enumeration, dimension 0 fastest.
  ecdg::StateIndex k = 0;
  for (int c1 = 0; c1 < 50; ++c1)
    for (int c0 = 0; c0 < 50; ++c0, ++k) {
      const auto s = ecdg::unflatten(cfg, k);
      CHECK(s.categories == std::vector<int>{c0, c1});
      CHECK(ecdg::flatten(cfg, s.categories).flat == k);
    }

  const std::vector<int> bad{50, 0}, short_vec{1};
  CHECK_THROWS_AS(ecdg::flatten(cfg, bad), ecdg::ValidationError);
  CHECK_THROWS_AS(ecdg::flatten(cfg, short_vec), ecdg::ValidationError);
  CHECK_THROWS_AS(ecdg::unflatten(cfg, 2500), ecdg::ValidationError);
}

TEST_CASE("gamma") {
  CHECK(ecdg::gamma_of(CircuitConfig(10, 50, 1, 0.1, 100.0)) == doctest::Approx(1.05).epsilon(1e-15));
  CHECK(ecdg::gamma_of(CircuitConfig(4, 50, 2, 0.1, 10.0)) == doctest::Approx(26.0).epsilon(1e-15));
  CHECK(ecdg::gamma_of(1e-300, 1.0, 50.0) == 1.0);
  for (double r : {0.01, 1.0, 7.0})
    for (double R : {0.5, 100.0}) CHECK(CircuitConfig(2, 3, 2, r, R).gamma() > 1.0);
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(CircuitConfig(0, 5, 1, 1, 1), ecdg::ValidationError);
  CHECK_THROWS_AS(CircuitConfig(1, 0, 1, 1, 1), ecdg::ValidationError);
  CHECK_THROWS_AS(CircuitConfig(1, 5, 0, 1, 1), ecdg::ValidationError);
  CHECK_THROWS_AS(CircuitConfig(1, 5, 1, 0, 1), ecdg::ValidationError);
  CHECK_THROWS_AS(CircuitConfig(1, 5, 1, 1, -1), ecdg::ValidationError);
  CHECK_THROWS_AS(CircuitConfig(1, 50, 20, 1, 1), ecdg::SizeError);
}

TEST_CASE("json round trip") {
  const CircuitConfig cfg(4, 50, 2, 0.1, 10.0);
  nlohmann::json j = cfg;
  CHECK(j.at("L") == 4);
  CHECK(j.at("R") == 10.0);
  CHECK(ecdg::circuit_from_json(j) == cfg);
  CHECK_THROWS_AS(ecdg::circuit_from_json(nlohmann::json{{"L", 2}}), ecdg::ValidationError);
}
