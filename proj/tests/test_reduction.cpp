#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fracbubbles/reduction.hpp"

using namespace fracbubbles;

TEST_CASE("cosecant-square identity") {
  for (int k : {2, 5, 17, 100}) CHECK(interaction_sum_unit(k, 2.0) == doctest::Approx((k * k - 1.0) / 12.0).epsilon(1e-13));
}

TEST_CASE("interaction sum on the ring") {
  const ProblemParams P(3, 0.5);
  const auto cfg = make_config(P, 12, 1.0);
  const double r = cfg.ring_radius();
  CHECK(interaction_sum(cfg, P) == doctest::Approx(interaction_sum_unit(12, 2.0) / (r * r)).epsilon(1e-13));
}

TEST_CASE("a_N extrapolation") {
  const ANEstimate a = a_N(ProblemParams(3, 0.5));
  CHECK(a.value == doctest::Approx(1.0 / 6.0).epsilon(1e-10));
  CHECK(a.converged);
  CHECK(delta_star(a) == doctest::Approx(6.0).epsilon(1e-9));
  // General alpha: the finite-k values settle as k grows.
  const ANEstimate b = a_N(ProblemParams(4, 0.4));
  CHECK(std::abs(b.finite_k.back() - b.value) < std::abs(b.finite_k.front() - b.value));
  CHECK_THROWS_AS(a_N(ProblemParams(3, 0.5), {100, 50}), ConfigError);
}

TEST_CASE("dilation constant") {
  const BubbleFamily fam(ProblemParams(3, 0.5));
  const double exact = -4.0 * std::numbers::pi * std::numbers::pi;
  CHECK(C_N_radial(fam) == doctest::Approx(exact).epsilon(1e-10));
  CHECK(C_N(fam).value == doctest::Approx(exact).epsilon(1e-6));
}

TEST_CASE("leading projection vanishes at delta star") {
  const ProblemParams P(3, 0.5);
  const double C = -4.0 * std::numbers::pi * std::numbers::pi;
  CHECK(leading_projection(C, 1.0 / 6.0, P, 64, 6.0) == doctest::Approx(0.0));
  CHECK(leading_projection(C, 1.0 / 6.0, P, 64, 3.0) > 0.0);
  CHECK(leading_projection(C, 1.0 / 6.0, P, 64, 12.0) < 0.0);
}

TEST_CASE("sign bracket") {
  const auto b = sign_bracket({3, 6, 12}, {1.0, 0.5, -2.0});
  CHECK(b.found);
  CHECK(b.lo == 6.0);
  CHECK(b.hi == 12.0);
  CHECK_FALSE(sign_bracket({3, 6, 12}, {1.0, 0.5, 2.0}).found);
}

TEST_CASE("projection splits into ball and exterior parts") {
  const ProblemParams P(3, 0.5);
  const Ansatz a(BubbleFamily(P), make_config(P, 8, 6.0));
  const ProjectionResult r = numerical_projection(a);
  CHECK(std::isfinite(r.value));
  CHECK(r.ball_first + r.ball_others + r.exterior == doctest::Approx(r.value).epsilon(1e-10));
}
