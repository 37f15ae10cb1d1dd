#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "kmpc/dynamics.hpp"
#include "oracles.hpp"

using namespace kmpc;

TEST_CASE("vector field")
{
  const State d = unicycle_deriv({1.0, 2.0, std::numbers::pi / 2, 3.0}, {0.5, -1.0});
  CHECK(d.x == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(d.y == doctest::Approx(3.0));
  CHECK(d.theta == doctest::Approx(0.5));
  CHECK(d.v == doctest::Approx(-1.0));
}

TEST_CASE("rk4 against closed-form motion")
{
  SUBCASE("straight line with constant acceleration")
  {
    const State s{-1.0, 0.5, 0.3, 1.2};
    const Input u{0.0, 0.7};
    State r = s;
    for (int k = 0; k < 100; ++k) { r = rk4_step(r, u, 0.01); }
    const State e = oracle::unicycle_exact(s, u, 1.0);
    // position is quadratic in t, which RK4 integrates exactly
    CHECK(std::abs(r.x - e.x) <= 1e-12);
    CHECK(std::abs(r.y - e.y) <= 1e-12);
    CHECK(std::abs(r.v - e.v) <= 1e-12);
  }
  SUBCASE("circular arc")
  {
    const State s{0.0, 0.0, 0.0, 2.0};
    const Input u{1.5, 0.0};
    State r = s;
    for (int k = 0; k < 100; ++k) { r = rk4_step(r, u, 0.01); }
    const State e = oracle::unicycle_exact(s, u, 1.0);
    CHECK(std::abs(r.x - e.x) <= 1e-9);
    CHECK(std::abs(r.y - e.y) <= 1e-9);
    CHECK(std::abs(r.theta - e.theta) <= 1e-12);
  }
  SUBCASE("fourth-order convergence")
  {
    const State s{0.0, 0.0, 0.4, 1.0};
    const Input u{2.0, 0.0};
    const State e = oracle::unicycle_exact(s, u, 0.5);
    const auto err = [&](int steps) {
      State r = s;
      for (int k = 0; k < steps; ++k) { r = rk4_step(r, u, 0.5 / steps); }
      return std::hypot(r.x - e.x, r.y - e.y);
    };
    const double ratio = err(10) / err(20);
    CHECK(ratio > 14.0);
    CHECK(ratio < 18.0);
  }
}

TEST_CASE("rk4 step size handling")
{
  const State s{1.0, 2.0, 3.0, 4.0};
  const State r = rk4_step(s, {1.0, 1.0}, 0.0);
  CHECK(r.x == s.x);
  CHECK(r.y == s.y);
  CHECK(r.theta == s.theta);
  CHECK(r.v == s.v);
  CHECK_THROWS_AS(rk4_step(s, {}, -0.01), std::invalid_argument);
  CHECK_THROWS_AS(rk4_step(s, {}, std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
}

TEST_CASE("heading is not wrapped")
{
  State s{0.0, 0.0, 3.1, 1.0};
  for (int k = 0; k < 20; ++k) { s = rk4_step(s, {3.0, 0.0}, 0.01); }
  CHECK(s.theta == doctest::Approx(3.7));
}

TEST_CASE("barrier")
{
  const ObstacleSpec obs;
  CHECK(barrier({-3.0, -3.0, 0.0, 0.2}, obs) == doctest::Approx(17.0));
  CHECK(barrier({1.0, 0.0, 0.0, 0.0}, obs) == doctest::Approx(0.0));
  CHECK(barrier({0.0, 0.0, 0.0, 0.0}, obs) == doctest::Approx(-1.0));
  const ObstacleSpec shifted{1.0, -2.0, 0.5};
  CHECK(barrier({1.0, -1.0, 0.0, 0.0}, shifted) == doctest::Approx(0.75));

  ObstacleSpec bad{0.0, 0.0, -1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("augmented step recomputes the barrier")
{
  const ObstacleSpec obs;
  const AugmentedState a = augment({-2.0, 0.0, 0.0, 1.0}, obs);
  CHECK(a.h == doctest::Approx(3.0));
  const AugmentedState b = aug_step(a, {0.0, 0.0}, 0.1, obs);
  CHECK(b.state.x == doctest::Approx(-1.9));
  CHECK(b.h == doctest::Approx(1.9 * 1.9 - 1.0));
  const auto v = b.vec();
  CHECK(v(4) == b.h);
  CHECK(v(0) == b.state.x);
}

TEST_CASE("box bounds")
{
  BoxBounds b;
  CHECK(b.contains(State{3.0, -3.0, 0.0, 0.0}));
  CHECK_FALSE(b.contains(State{3.0 + 1e-6, 0.0, 0.0, 0.0}));
  CHECK(b.contains(State{3.0 + 1e-9, 0.0, 0.0, 0.0}, 1e-8));
  CHECK(b.contains(Input{-3.0, 3.0}));
  CHECK_FALSE(b.contains(Input{-3.1, 0.0}));
  b.input_lo(0) = 4.0;
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
}
