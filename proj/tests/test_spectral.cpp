#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "fracbubbles/spectral.hpp"

using namespace fracbubbles;

namespace {
GridSpec small(int n = 32, double L = 8.0) {
  GridSpec g;
  g.n = n;
  g.L = L;
  g.window = L / 2;
  return g;
}
}  // namespace

TEST_CASE("grid validation") {
  GridSpec g;
  CHECK_NOTHROW(g.validate());
  g.n = 48;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g = GridSpec{};
  g.L = 2.0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  CHECK(GridSpec{}.resolves(0.5));
  CHECK_FALSE(GridSpec{}.resolves(0.1));
}

TEST_CASE("Fourier modes are eigenfunctions") {
  const GridSpec g = small();
  const double s = 0.3;
  const int m[3] = {2, -3, 5};
  const GridField f = GridField::sample(g, [&](std::span<const double> y) {
    double ph = 0.0;
    for (int d = 0; d < 3; ++d) ph += std::numbers::pi / g.L * m[d] * y[static_cast<std::size_t>(d)];
    return std::cos(ph);
  });
  const double lam = std::pow(std::pow(std::numbers::pi / g.L, 2) * (4 + 9 + 25), s);
  const GridField Df = frac_laplacian(f, s);
  double err = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) err = std::max(err, std::abs(Df[i] - lam * f[i]));
  CHECK(err < 1e-12);
}

TEST_CASE("multiplier is self-adjoint and kills constants") {
  const GridSpec g = small();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1, 1);
  std::vector<double> a(g.size()), b(g.size()), Da(g.size()), Db(g.size()), one(g.size(), 1.0), D1(g.size());
  for (auto& v : a) v = U(rng);
  for (auto& v : b) v = U(rng);
  FracLaplacian D(g, 0.5);
  D.apply(a, Da);
  D.apply(b, Db);
  D.apply(one, D1);
  CHECK(dot(Da, b) == doctest::Approx(dot(a, Db)).epsilon(1e-13));
  CHECK(norm2_of(D1) < 1e-12);
  CHECK(D.energy(a) > 0.0);
}

TEST_CASE("shifted inverse undoes the shifted operator") {
  const GridSpec g = small();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-1, 1);
  std::vector<double> a(g.size()), Da(g.size()), back(g.size());
  for (auto& v : a) v = U(rng);
  FracLaplacian D(g, 0.7);
  D.apply(a, Da);
  for (std::size_t i = 0; i < a.size(); ++i) Da[i] += 2.0 * a[i];
  D.apply_shifted_inverse(Da, back, 2.0);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(back[i] == doctest::Approx(a[i]).epsilon(1e-10));
}

TEST_CASE("grid symmetries commute with the multiplier and project") {
  const GridSpec g = small();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int k : {3, 4, 6}) {
    const GridSymmetry S(g, k);
    std::vector<double> f(g.size());
    for (auto& v : f) v = U(rng);
    std::vector<double> sf = f, twice;
    S.symmetrize(sf);
    CHECK(S.defect(sf) < 1e-14);
    twice = sf;
    S.symmetrize(twice);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(twice[i] == doctest::Approx(sf[i]).epsilon(1e-14));
    FracLaplacian D(g, 0.5);
    std::vector<double> Df(f.size()), Dsf(f.size());
    D.apply(f, Df);
    D.apply(sf, Dsf);
    S.symmetrize(Df);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(Dsf[i] == doctest::Approx(Df[i]).epsilon(1e-10).scale(1.0));
  }
  CHECK(GridSymmetry(g, 8).order() == 16);
  CHECK(GridSymmetry(g, 6).order() == 8);
  CHECK(GridSymmetry(g, 5).order() == 4);
}

TEST_CASE("cubic interpolation is exact for cubics") {
  const GridSpec g = small();
  const auto cubic = [](std::span<const double> y) { return 0.1 * y[0] * y[0] * y[0] - y[1] * y[2] + 0.5 * y[2] * y[2] + 2.0; };
  const GridField f = GridField::sample(g, cubic);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-5, 5);
  for (int t = 0; t < 100; ++t) {
    Point y{U(rng), U(rng), U(rng)};
    CHECK(f.interpolate(y) == doctest::Approx(cubic(y)).epsilon(1e-11));
  }
  CHECK(f.interpolate(Point{9.0, 0.0, 0.0}) == 0.0);
}

TEST_CASE("calibration recovers the closed-form amplitude") {
  const ProblemParams P(3, 0.5);
  GridSpec g;
  g.n = 64;
  const Calibration c = calibrate_amplitude(P, g);
  CHECK(c.amplitude.c == doctest::Approx(c.closed_form_c).epsilon(2e-3));
  CHECK(c.rel_sup_error < 1e-2);
}

TEST_CASE("spectral profile matches the bubble equation") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  GridSpec g;
  g.n = 64;
  const RadialProfile prof(fam, g);
  for (double r : {0.0, 0.3, 0.9, 1.7, 5.0}) {
    const double exact = fam.pow_p(fam.U_r2(r * r));
    CHECK(prof(r) == doctest::Approx(exact).epsilon(5e-2));
  }
}

TEST_CASE("residual oracle on the default grid") {
  const ProblemParams P(3, 0.5);
  GridSpec g;
  const BubbleFamily fam(P, calibrate_amplitude(P, g).amplitude);
  const ResidualOracle o = residual_oracle(Ansatz(fam, make_config(P, 8, 6.0)), g);
  CHECK(o.rel_sup_error < 1e-2);
  CHECK(o.origin_rel_error < 1e-2);
}

TEST_CASE("L0 annihilates the kernels and maps U to (1-p)U^p") {
  const ProblemParams P(3, 0.5);
  GridSpec g;
  g.n = 64;
  const BubbleFamily fam(P, calibrate_amplitude(P, g).amplitude);
  const GridField U = GridField::sample(g, [&fam](std::span<const double> y) { return fam.U_r2(norm2(y)); }, true);
  const GridField LU = apply_L0(U, fam);
  double err = 0.0, ref = 0.0;
  Point y(3);
  for (std::size_t i = 0; i < U.size(); ++i) {
    U.point(i, y.coords());
    if (y.norm() > 4.0) continue;
    const double want = (1.0 - fam.p()) * fam.pow_p(U[i]);
    err = std::max(err, std::abs(LU[i] - want));
    ref = std::max(ref, std::abs(want));
  }
  CHECK(err / ref < 1e-2);
  for (int l = 1; l <= 4; ++l) {
    const GridField v = GridField::sample(g, [&fam, l](std::span<const double> z) { return fam.kernel(l, z); }, true);
    const GridField Wv = GridField::sample(g, [&fam, l](std::span<const double> z) {
      return fam.p() * fam.pow_pm1(fam.U_r2(norm2(z))) * fam.kernel(l, z);
    });
    CHECK(apply_L0(v, fam).interior_max_abs() < 1e-2 * Wv.interior_max_abs());
  }
}

TEST_CASE("projected solve recovers a manufactured solution") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  const GridSpec g = small(32, 8.0);
  GridField phi = GridField::sample(g, [](std::span<const double> y) { return std::exp(-norm2(y)) * (1.0 + y[1]); });
  const KernelSet K = kernel_set(fam, g, {1, 2, 3, 4});
  std::vector<double> b(4);
  for (std::size_t i = 0; i < 4; ++i) b[i] = dot(phi.data(), K.Wv[i].data());
  REQUIRE(dense_solve(K.gram, b, 4));
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] -= b[l] * K.v[l][i];
  const GridField h = apply_L0(phi, fam);
  const ProjectedSolve sol = projected_solve(h, fam);
  CHECK(sol.gmres.converged);
  GridField d = sol.phi;
  d -= phi;
  CHECK(d.l2() < 1e-5 * phi.l2());
  for (std::size_t l = 0; l < 4; ++l) CHECK(std::abs(dot(sol.phi.data(), K.Wv[l].data())) < 1e-10);
}

TEST_CASE("projected solve removes kernel components of the data") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  const GridSpec g = small(32, 8.0);
  const GridField h = GridField::sample(g, [&fam](std::span<const double> y) {
    return fam.pow_pm1(fam.U_r2(norm2(y))) * fam.kernel(4, y) + std::exp(-norm2(y));
  });
  const ProjectedSolve sol = projected_solve(h, fam);
  CHECK(sol.pre_violation > 1e-3);
  CHECK(std::abs(sol.coeffs[3]) > 0.1);
  const GridField r = apply_L0(sol.phi, fam);
  GridField target = h;
  const KernelSet K = kernel_set(fam, g, {1, 2, 3, 4});
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t i = 0; i < h.size(); ++i) target[i] -= sol.coeffs[l] * K.Wv[l][i];
  GridField d = r;
  d -= target;
  // The discrete kernels are only approximate, so d may keep a part along U^{p-1} v_l.
  std::vector<double> e(4), Gt(16);
  for (std::size_t l = 0; l < 4; ++l) e[l] = dot(d.data(), K.v[l].data());
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) Gt[i * 4 + j] = K.gram[j * 4 + i];
  REQUIRE(dense_solve(Gt, e, 4));
  for (std::size_t l = 0; l < 4; ++l)
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= e[l] * K.Wv[l][i];
  CHECK(d.l2() < 1e-6 * h.l2());
}

TEST_CASE("direct refinement on a small grid") {
  const ProblemParams P(3, 0.5);
  GridSpec g;
  g.n = 32;
  const BubbleFamily fam(P, calibrate_amplitude(P, g).amplitude);
  const Ansatz a(fam, make_config(P, 8, 6.0));
  const RefineResult r = refine(a, g);
  CHECK_FALSE(r.diverged);
  CHECK(r.final_residual < 0.1 * r.ansatz_residual);
  CHECK(GridSymmetry(r.phi.spec(), 8).defect(r.phi.data()) < 1e-12);
  CHECK(r.history.front().residual_norm == doctest::Approx(r.ansatz_residual));
  CHECK(refined_value(a, r.phi, Point(3)) > 0.0);
  CHECK(refined_value(a, r.phi, a.config().center(1)) < 0.0);
}

TEST_CASE("gluing refinement reports its diagnostics") {
  const ProblemParams P(3, 0.5);
  const BubbleFamily fam(P);
  const Ansatz a(fam, make_config(P, 4, 1.0, 0.4, 1.0));
  RefineOptions opt;
  opt.mode = RefineMode::Gluing;
  opt.max_iter = 2;
  opt.inner_iter = 3;
  opt.local_n = 32;
  opt.local_L = 8.0;
  const RefineResult r = refine(a, small(32, 8.0), opt);
  CHECK(r.history.size() >= 2);
  CHECK(r.f_pieces.size() == 5);
  CHECK(r.local_phi.size() == 32u * 32u * 32u);
  CHECK(std::isfinite(r.kernel_coefficient));
  CHECK_FALSE(r.contraction.empty());
}

TEST_CASE("grid export round trip") {
  const GridSpec g = small(16, 4.0);
  const GridField f = GridField::sample(g, [](std::span<const double> y) { return y[0] - 2 * y[2]; });
  const auto path = (std::filesystem::temp_directory_path() / "fracbubbles_export.bin").string();
  export_grid(f, path, {{"s", 0.5}, {"k", 4}, {"delta", 1.0}});
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  REQUIRE(bytes.size() == 8 * f.size());
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) bits = (bits << 8) | bytes[8 * 5 + static_cast<std::size_t>(b)];
  CHECK(std::bit_cast<double>(bits) == f[5]);
  std::ifstream js(path + ".json");
  const auto meta = nlohmann::json::parse(js);
  for (const char* key : {"n", "L", "N", "s", "k", "delta"}) CHECK(meta.contains(key));
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".json");
}
