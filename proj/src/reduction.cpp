#include "fracbubbles/reduction.hpp"

#include <cmath>
#include <numbers>

#include "fracbubbles/parallel.hpp"

namespace fracbubbles {

double interaction_sum(const BubbleConfig& cfg, double alpha) {
  double acc = 0.0;
  for (int j = 2; j <= cfg.k(); ++j) acc += std::pow(pairwise_center_distance(cfg, 1, j), -alpha);
  return acc;
}

double interaction_sum(const BubbleConfig& cfg, const ProblemParams& params) {
  return interaction_sum(cfg, params.alpha());
}

double interaction_sum_unit(int k, double alpha) {
  CompensatedSum acc;
  for (int j = 1; j < k; ++j) acc.add(std::pow(2.0 * std::sin(std::numbers::pi * j / k), -alpha));
  return acc.value();
}

ANEstimate a_N(const ProblemParams& params, const std::vector<int>& k_sequence) {
  if (k_sequence.size() < 2) throw ConfigError("a_N needs at least two k values");
  for (std::size_t i = 1; i < k_sequence.size(); ++i)
    if (k_sequence[i] <= k_sequence[i - 1]) throw ConfigError("k sequence must be strictly increasing");
  const double alpha = params.alpha();
  const double pref = std::pow(2.0, 0.5 * alpha);
  ANEstimate out;
  out.k = k_sequence;
  for (int k : k_sequence) out.finite_k.push_back(pref * interaction_sum_unit(k, alpha) / std::pow(k, alpha));
  for (std::size_t i = 1; i < k_sequence.size(); ++i) {
    const double k1 = k_sequence[i - 1], k2 = k_sequence[i];
    out.extrapolants.push_back((k2 * k2 * out.finite_k[i] - k1 * k1 * out.finite_k[i - 1]) / (k2 * k2 - k1 * k1));
  }
  out.value = out.extrapolants.back();
  out.error = out.extrapolants.size() > 1 ? std::abs(out.value - out.extrapolants[out.extrapolants.size() - 2])
                                          : std::abs(out.value - out.finite_k.back());
  out.converged = out.error <= 1e-6 * std::abs(out.value);
  return out;
}

NormResult C_N(const BubbleFamily& fam, QuadratureOptions opt) {
  const ProblemParams& params = fam.params();
  const QuadratureScheme scheme(make_config(params, 0, 1.0), opt);
  const int l = params.N() + 1;
  return integrate_checked(
      [&fam, l](std::span<const double> y) {
        return fam.p() * fam.pow_pm1(fam.U_r2(norm2(y))) * fam.kernel(l, y);
      },
      scheme, Symmetry::Rotation);
}

double C_N_radial(const BubbleFamily& fam) {
  const double a = fam.params().alpha();
  return radial_integral(
      [&fam, a](double r) {
        const double r2 = r * r;
        const double v = fam.c() * 0.5 * a * (1.0 - r2) * std::pow(1.0 + r2, -0.5 * a - 1.0);
        return fam.p() * fam.pow_pm1(fam.U_r2(r2)) * v;
      },
      fam.params().N());
}

double delta_star(const ANEstimate& a) { return 1.0 / a.value; }

double leading_projection(double C, double aN, const ProblemParams& params, int k, double delta) {
  return C * delta / std::pow(k, params.alpha()) * (delta * aN - 1.0);
}

ProjectionResult numerical_projection(const Ansatz& a, QuadratureOptions opt) {
  const BubbleConfig& cfg = a.config();
  if (cfg.k() < 2) throw ConfigError("numerical projection needs k >= 2");
  const BubbleFamily& fam = a.family();
  const int l = fam.params().N() + 1;
  const double mu = cfg.mu();
  const Point xi = cfg.center(1);
  const Integrand E = [&a](std::span<const double> y) { return a.sample(y).E; };
  const Integrand v = [&fam, l, mu, xi](std::span<const double> y) {
    return fam.rescaled_kernel(l, mu, xi.coords(), y);
  };
  const QuadratureScheme scheme(cfg, opt);
  const RegionBreakdown coarse = scheme.integrate_product(E, v);
  const RegionBreakdown fine = scheme.refined().integrate_product(E, v);
  ProjectionResult out;
  out.value = fine.total();
  out.est_rel_error = std::abs(fine.total() - coarse.total()) / std::max(std::abs(fine.total()), 1e-300);
  out.ball_first = fine.ball_first;
  out.ball_others = fine.ball_others;
  out.exterior = fine.exterior;
  return out;
}

Bracket sign_bracket(const std::vector<double>& deltas, const std::vector<double>& values) {
  Bracket b;
  for (std::size_t i = 1; i < deltas.size() && i < values.size(); ++i)
    if ((values[i - 1] < 0.0) != (values[i] < 0.0)) {
      b.found = true;
      b.lo = deltas[i - 1];
      b.hi = deltas[i];
      return b;
    }
  return b;
}

}  // namespace fracbubbles
