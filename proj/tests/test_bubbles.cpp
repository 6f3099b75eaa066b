#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "fracbubbles/bubbles.hpp"

using namespace fracbubbles;

namespace {
Point random_point(std::mt19937_64& rng, int N, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Point y(N);
  for (int d = 0; d < N; ++d) y[d] = g(rng);
  return y;
}
}  // namespace

TEST_CASE("closed-form amplitude") {
  CHECK(Amplitude::closed_form(ProblemParams(3, 0.5)).c == doctest::Approx(2.0));
  // s -> 1 limit of N = 3: c^{p-1} = 4 Gamma(5/2) / Gamma(1/2) = 3.
  const ProblemParams P(3, 0.999999);
  CHECK(std::pow(Amplitude::closed_form(P).c, P.p() - 1.0) == doctest::Approx(3.0).epsilon(1e-4));
}

TEST_CASE("power functions agree with std::pow") {
  for (double e : {2.0, 3.0, 0.5, 1.5, -1.5, 0.37, -2.2}) {
    const PowerFn f(e);
    for (double x : {1e-8, 0.3, 1.0, 7.5, 1e6}) CHECK(f(x) == doctest::Approx(std::pow(x, e)).epsilon(1e-14));
  }
}

TEST_CASE("kernels are derivatives of the bubble") {
  const ProblemParams P(4, 0.35);
  const BubbleFamily fam(P);
  std::mt19937_64 rng(1);
  const double h = 1e-5;
  for (int t = 0; t < 20; ++t) {
    const Point y = random_point(rng, 4);
    for (int l = 1; l <= 4; ++l) {
      Point a = y, b = y;
      a[l - 1] += h;
      b[l - 1] -= h;
      const double fd = (std_bubble(fam, a) - std_bubble(fam, b)) / (2 * h);
      CHECK(kernel(fam, l, y) == doctest::Approx(fd).epsilon(1e-7));
    }
    // d/dmu of mu^{-alpha/2} U(y / mu) at mu = 1, with the sign of the dilation generator.
    auto w = [&](double mu) { return fam.w_r2(mu, y.norm2()); };
    const double fd = -(w(1 + h) - w(1 - h)) / (2 * h);
    CHECK(kernel(fam, 5, y) == doctest::Approx(fd).epsilon(1e-7));
  }
  CHECK_THROWS_AS(kernel(fam, 6, Point(4)), std::out_of_range);
}

TEST_CASE("bubble equals its Kelvin transform exactly on the shell") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  std::mt19937_64 rng(7);
  for (double mu : {0.05, 0.3, 0.8}) {
    Point xi(3);
    xi[0] = std::sqrt(1 - mu * mu);
    const Field w = bubble_field(fam, mu, xi);
    const Field kw = kelvin_field(w, P);
    for (int t = 0; t < 100; ++t) {
      const Point y = random_point(rng, 3, 2.0);
      CHECK(kw(y) == doctest::Approx(w(y)).epsilon(1e-12));
    }
  }
  Point xo(3);
  xo[0] = std::sqrt(0.9 - 0.09);
  const Field wo = bubble_field(fam, 0.3, xo);
  const Point y = Point::axis(3, 0, 2.0);
  CHECK(std::abs(kelvin(wo, P, y) - wo(y)) / wo(y) > 1e-6);
}

TEST_CASE("Kelvin transform is an involution in both modes") {
  const ProblemParams P(5, 0.7);
  const Field f([](std::span<const double> y) { return std::exp(-norm2(y)) + y[0]; });
  std::mt19937_64 rng(3);
  for (auto mode : {KelvinMode::Standard, KelvinMode::Covariant}) {
    const Field kk = kelvin_field(kelvin_field(f, P, mode), P, mode);
    for (int t = 0; t < 50; ++t) {
      const Point y = random_point(rng, 5);
      CHECK(kk(y) == doctest::Approx(f(y)).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(kelvin(f, P, Point(5)), std::domain_error);
}

TEST_CASE("symmetry group acts as a group of isometries") {
  for (int k : {1, 3, 8}) {
    const SymmetryGroup G(k, 4);
    CHECK(G.order() == k * 8);
    std::mt19937_64 rng(k);
    const Point y = random_point(rng, 4);
    std::set<std::pair<long, long>> seen;
    for (int g = 0; g < G.order(); ++g) {
      const Point z = G.apply(g, y);
      CHECK(z.norm2() == doctest::Approx(y.norm2()).epsilon(1e-14));
      seen.insert({std::lround(z[0] * 1e9), std::lround(z[1] * 1e9 + z[2] * 1e4 + z[3] * 1e2)});
    }
    CHECK(seen.size() == static_cast<std::size_t>(G.order()));
  }
}

TEST_CASE("centre set is invariant under the group") {
  const ProblemParams P(3, 0.5);
  const auto cfg = make_config(P, 6, 1.0);
  const SymmetryGroup G(6, 3);
  for (int g = 0; g < G.order(); ++g)
    for (const auto& c : cfg.centers()) {
      const Point z = G.apply(g, c);
      double best = 1.0;
      for (const auto& d : cfg.centers()) best = std::min(best, distance2(z, d));
      CHECK(best < 1e-24);
    }
  CHECK(symmetry_orbit(cfg, cfg.center(1)).size() == 6);
}
