#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fracbubbles/ansatz.hpp"

using namespace fracbubbles;

namespace {
Point random_point(std::mt19937_64& rng, int N, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Point y(N);
  for (int d = 0; d < N; ++d) y[d] = g(rng);
  return y;
}

double naive_residual(const BubbleFamily& fam, const BubbleConfig& cfg, std::span<const double> y) {
  const double U = std_bubble(fam, y);
  double sum = 0.0, sum_p = 0.0;
  for (int j = 1; j <= cfg.k(); ++j) {
    const double Uj = rescaled_bubble(fam, cfg, j, y);
    sum += Uj;
    sum_p += fam.pow_p(Uj);
  }
  return fam.pow_p(U) - sum_p - fam.signed_pow_p(U - sum);
}
}  // namespace

TEST_CASE("residual vanishes without bubbles") {
  const ProblemParams P(3, 0.5);
  const Ansatz a(BubbleFamily(P), make_config(P, 0, 1.0));
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) CHECK(a.residual(random_point(rng, 3, 3.0)) == 0.0);
}

TEST_CASE("stable residual agrees with the direct formula away from cancellation") {
  const ProblemParams P(4, 0.6);
  const BubbleFamily fam(P);
  const auto cfg = make_config(P, 5, 1.0, 0.1, 1.0);
  const Ansatz a(fam, cfg);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const Point y = random_point(rng, 4);
    const double ref = naive_residual(fam, cfg, y);
    CHECK(a.residual(y) == doctest::Approx(ref).epsilon(1e-9).scale(fam.pow_p(std_bubble(fam, y))));
  }
}

TEST_CASE("residual is finite and small relative to the bubble at its centre") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  const auto cfg = make_config(P, 16, 1.0);
  const Ansatz a(fam, cfg);
  const auto smp = a.sample(cfg.center(3));
  CHECK(smp.nearest == 3);
  CHECK(std::isfinite(smp.E));
  CHECK(std::abs(smp.E) < 1e-2 * fam.pow_p(smp.U_near));
}

TEST_CASE("residual is invariant under the symmetry group and Kelvin covariant") {
  const ProblemParams P(3, 0.5);
  const Ansatz a(BubbleFamily(P), make_config(P, 8, 2.0));
  const SymmetryGroup G(8, 3);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 40; ++t) {
    const Point y = random_point(rng, 3);
    const double e = a.residual(y);
    for (int g = 0; g < G.order(); ++g) CHECK(a.residual(G.apply(g, y)) == doctest::Approx(e).epsilon(1e-10));
    const double ek = kelvin(a.residual_field(), P, y, KelvinMode::Covariant);
    CHECK(ek == doctest::Approx(e).epsilon(1e-10));
    CHECK(kelvin(a.U_star_field(), P, y) == doctest::Approx(a.U_star(y)).epsilon(1e-12));
  }
}

TEST_CASE("nonlinear remainder is quadratic in phi") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  for (double u : {-1.3, 0.4, 2.0}) {
    const double r1 = nonlinear_remainder_value(fam, u, 1e-3);
    const double r2 = nonlinear_remainder_value(fam, u, 2e-3);
    CHECK(r2 / r1 == doctest::Approx(4.0).epsilon(1e-3));
  }
}

TEST_CASE("cutoff profile and supports") {
  CHECK(cutoff_profile(0.0) == 1.0);
  CHECK(cutoff_profile(0.5) == 1.0);
  CHECK(cutoff_profile(1.0) == 0.0);
  CHECK(cutoff_profile(0.75) == doctest::Approx(0.5));
  for (double t = 0.5; t < 1.0; t += 0.01) CHECK(cutoff_profile(t) >= cutoff_profile(t + 0.01));

  const ProblemParams P(3, 0.5);
  const auto cfg = make_config(P, 8, 1.0);
  CHECK(cutoff(cfg, 1, cfg.center(1)) == doctest::Approx(1.0));
  CHECK(cutoff(cfg, 1, cfg.center(2)) == 0.0);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const Point y = random_point(rng, 3);
    double sum = 0.0;
    for (int j = 1; j <= 8; ++j) sum += cutoff(cfg, j, y);
    CHECK(cutoff_sum(cfg, y) == doctest::Approx(sum).epsilon(1e-14));
    CHECK(sum <= 1.0 + 1e-14);
  }
}

TEST_CASE("glued system adds up to the full equation") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  const auto cfg = make_config(P, 4, 1.0, 0.3, 1.0);
  const Ansatz a(fam, cfg);
  const GluedOperators G(a);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-0.2, 0.2);
  for (int t = 0; t < 200; ++t) {
    Point y = random_point(rng, 3, 0.1);
    y = y + cfg.center(1 + t % 4);
    std::vector<double> phi(4);
    for (auto& v : phi) v = U(rng);
    const double psi = U(rng);
    double sum = 0.0;
    for (double v : phi) sum += v;
    const double us = fam.pow_pm1(std::abs(a.U_star(y)));
    const double E = a.residual(y);
    const double Nl = nonlinear_remainder_value(fam, a.U_star(y), sum + psi);
    double total = -fam.p() * fam.pow_pm1(std_bubble(fam, y)) * psi + (G.V1(y) + G.V2(y)) * psi + G.M1(y, phi) +
                   G.M2(y) + G.M3(y, sum, psi);
    for (int j = 1; j <= 4; ++j) {
      const double z = cutoff(cfg, j, y);
      total += -fam.p() * us * z * phi[static_cast<std::size_t>(j - 1)] + z * (-fam.p() * us * psi + E - Nl);
    }
    const double full = -fam.p() * us * (sum + psi) + E - Nl;
    CHECK(total == doctest::Approx(full).epsilon(1e-10).scale(1.0 + std::abs(E) + fam.p() * us));
  }
}

TEST_CASE("first-bubble pieces sum to the local source") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  const auto cfg = make_config(P, 4, 1.0, 0.3, 1.0);
  const Ansatz a(fam, cfg);
  const GluedOperators G(a);
  const Point y = cfg.center(1) + Point{0.01, -0.02, 0.005};
  const double phi1 = 0.05, sum = 0.08, psi = -0.03;
  const auto f = G.f_pieces(y, phi1, sum, psi);
  const double z = cutoff(cfg, 1, y);
  const double us = fam.pow_pm1(std::abs(a.U_star(y)));
  const double U1 = fam.pow_pm1(rescaled_bubble(fam, cfg, 1, y));
  const double src = z * (-fam.p() * us * psi + a.residual(y) - nonlinear_remainder_value(fam, a.U_star(y), sum + psi));
  CHECK(f.f1 + f.f2 == doctest::Approx(fam.p() * (U1 - z * us) * phi1).epsilon(1e-12));
  CHECK(f.f3 + f.f4 + f.f5 == doctest::Approx(src).epsilon(1e-12));
}
