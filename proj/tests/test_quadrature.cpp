#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fracbubbles/ansatz.hpp"
#include "fracbubbles/quadrature.hpp"

using namespace fracbubbles;

TEST_CASE("Gauss-Legendre exactness") {
  const Rule1D r = gauss_legendre(6, 0.0, 2.0);
  for (int d = 0; d <= 11; ++d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < r.x.size(); ++i) acc += r.w[i] * std::pow(r.x[i], d);
    CHECK(acc == doctest::Approx(std::pow(2.0, d + 1) / (d + 1)).epsilon(1e-13));
  }
}

TEST_CASE("sphere rules integrate polynomials") {
  CHECK(sphere_area(3) == doctest::Approx(4 * std::numbers::pi));
  CHECK(sphere_area(4) == doctest::Approx(2 * std::numbers::pi * std::numbers::pi));
  const SphereRule s = sphere_rule(2, 8);
  double area = 0.0, z2 = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    area += s.w[i];
    z2 += s.w[i] * s.x[3 * i + 2] * s.x[3 * i + 2];
  }
  CHECK(area == doctest::Approx(4 * std::numbers::pi).epsilon(1e-13));
  CHECK(z2 == doctest::Approx(4 * std::numbers::pi / 3).epsilon(1e-6));
}

TEST_CASE("scheme integrates radial functions over R^3") {
  const ProblemParams P(3, 0.5);
  for (int k : {0, 8, 32}) {
    const QuadratureScheme scheme(make_config(P, k, 1.0));
    for (double w : scheme.weights()) CHECK(w >= 0.0);
    const auto r = scheme.integrate([](std::span<const double> y) { return std::pow(1 + norm2(y), -3.0); }, Symmetry::Rotation);
    CHECK(r.total() == doctest::Approx(std::numbers::pi * std::numbers::pi / 4).epsilon(1e-6));
  }
}

TEST_CASE("concentrated bubble energy is scale invariant") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  const auto cfg = make_config(P, 16, 1.0);
  const QuadratureScheme scheme(cfg);
  const double ref = radial_integral([&fam](double r) { return std::pow(fam.U_r2(r * r), 3.0); }, 3);
  const auto r = scheme.integrate([&](std::span<const double> y) { return std::pow(rescaled_bubble(fam, cfg, 1, y), 3.0); });
  CHECK(r.total() == doctest::Approx(ref).epsilon(1e-5));
}

TEST_CASE("rotation reduction agrees with the full sum") {
  const ProblemParams P(3, 0.5);
  const Ansatz a(BubbleFamily(P), make_config(P, 6, 1.0));
  const QuadratureScheme scheme(a.config());
  const auto f = [&a](std::span<const double> y) { return std::abs(a.residual(y)); };
  const double full = scheme.integrate(f).total();
  const double red = scheme.integrate(f, Symmetry::Rotation).total();
  CHECK(red == doctest::Approx(full).epsilon(1e-10));
}

TEST_CASE("weighted norm is homogeneous and converges") {
  const ProblemParams P(3, 0.5);
  const auto cfg = make_config(P, 8, 1.0);
  const Ansatz a(BubbleFamily(P), cfg);
  const QuadratureScheme scheme(cfg);
  const auto E = a.residual_field();
  const NormResult n1 = norm_starstar([&E](std::span<const double> y) { return E(y); }, P, scheme, Symmetry::Rotation);
  const NormResult n3 = norm_starstar([&E](std::span<const double> y) { return 3.0 * E(y); }, P, scheme, Symmetry::Rotation);
  CHECK(n1.converged);
  CHECK(n1.est_rel_error < 1e-2);
  CHECK(n3.value == doctest::Approx(3.0 * n1.value).epsilon(1e-12));
}

TEST_CASE("weighted sup of the bubble") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  // (1+r)^2 c / (1+r^2) peaks at r = 1 with value 2c.
  const auto r = norm_star([&fam](std::span<const double> y) { return std_bubble(fam, y); }, P);
  CHECK(r.value == doctest::Approx(2.0 * fam.c()).epsilon(1e-8));
  CHECK(r.argmax.norm() == doctest::Approx(1.0).epsilon(1e-4));
}
