#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ecdg/chebyshev.hpp"

using ecdg::chebyshev_t;
using ecdg::chebyshev_u;

TEST_CASE("base cases and small values") {
  CHECK(chebyshev_t(0, 1.05) == 1.0);
  CHECK(chebyshev_t(1, 26.0) == 26.0);
  // 8 g^4 - 8 g^2 + 1 at g = 26
  CHECK(chebyshev_t(4, 26.0) == 3650401.0);
  CHECK(chebyshev_u(-1, 2.0) == 0.0);
  CHECK(chebyshev_u(0, 1.05) == 1.0);
  CHECK(chebyshev_u(2, 1.05) == doctest::Approx(3.41).epsilon(1e-14));
  CHECK(ecdg::chebyshev(ecdg::PolyKind::Second, 1, 3.0) == 6.0);
}

TEST_CASE("hyperbolic identities") {
  for (int i = 0; i < 50; ++i) {
    const double t = 3.0 * i / 49.0;
    for (int l = 0; l <= 20; ++l) {
      const double want = std::cosh(l * t);
      CHECK(std::abs(chebyshev_t(l, std::cosh(t)) - want) <= 1e-10 * std::max(1.0, want));
      if (t >= 0.1) {
        const double wu = std::sinh((l + 1) * t) / std::sinh(t);
        CHECK(std::abs(chebyshev_u(l, std::cosh(t)) - wu) <= 1e-9 * std::abs(wu));
      }
    }
  }
}

TEST_CASE("Pell identity") {
  for (double g : {1.05, 2.0, 26.0}) {
    for (int l = 0; l <= 15; ++l) {
      const double t = chebyshev_t(l, g);
      const double u = chebyshev_u(l - 1, g);
      const double lhs = t * t - (g * g - 1.0) * u * u;
      CHECK(std::abs(lhs - 1.0) <= 1e-9 * t * t);
    }
  }
}

TEST_CASE("table agrees with direct evaluation") {
  const ecdg::ChebyshevTable<double> tab(12, 1.7);
  for (int l = 0; l <= 12; ++l) CHECK(tab.t(l) == chebyshev_t(l, 1.7));
  for (int l = -1; l <= 12; ++l) CHECK(tab.u(l) == chebyshev_u(l, 1.7));
}

TEST_CASE("long double instantiation") {
  CHECK(chebyshev_t<long double>(4, 26.0L) == 3650401.0L);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(chebyshev_t(-1, 2.0), std::domain_error);
  CHECK_THROWS_AS(chebyshev_u(-2, 2.0), std::domain_error);
  CHECK_THROWS_AS(chebyshev_t(3, 0.5), std::domain_error);
  try {
    chebyshev_t(1000, 26.0);
    FAIL("expected overflow");
  } catch (const std::range_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("l=") != std::string::npos);
    CHECK(msg.find("gamma=26") != std::string::npos);
  }
  CHECK_THROWS_AS(chebyshev_u(1000, 26.0), std::range_error);
}
