#include "fracbubbles/ansatz.hpp"

#include <cmath>
#include <numbers>

namespace fracbubbles {

Ansatz::Ansatz(BubbleFamily fam, BubbleConfig cfg) : fam_(std::move(fam)), cfg_(std::move(cfg)) {
  if (cfg_.k() > 0 && cfg_.dim() != fam_.params().N())
    throw ConfigError("configuration dimension does not match the problem dimension");
}

Ansatz::Sample Ansatz::sample(std::span<const double> y) const {
  Sample out;
  out.U = fam_.U_r2(norm2(y));
  const double Up = fam_.pow_p(out.U);
  const int k = cfg_.k();
  if (k == 0) {
    out.U_star = out.U;
    return out;
  }
  const double mu = cfg_.mu();
  const auto& centers = cfg_.centers();
  double sum = 0.0;
  for (int j = 0; j < k; ++j) {
    const double v = fam_.w_r2(mu, distance2(y, centers[static_cast<std::size_t>(j)].coords()));
    sum += v;
    if (v > out.U_near) {
      out.U_near = v;
      out.nearest = j + 1;
    }
  }
  double others_p = 0.0;
  for (int j = 0; j < k; ++j) {
    if (j + 1 == out.nearest) continue;
    others_p += fam_.pow_p(fam_.w_r2(mu, distance2(y, centers[static_cast<std::size_t>(j)].coords())));
  }
  out.sum_Uj = sum;
  out.U_star = out.U - sum;
  const double b = out.U_near;
  const double A = out.U - (sum - b);
  if (b > std::abs(A)) {
    const double bracket = -fam_.pow_p(b) * std::expm1(fam_.p() * std::log1p(-A / b));
    out.E = Up - others_p - bracket;
  } else {
    out.E = Up - others_p - fam_.pow_p(b) - fam_.signed_pow_p(out.U_star);
  }
  return out;
}

double Ansatz::U_star(std::span<const double> y) const {
  double v = fam_.U_r2(norm2(y));
  for (const auto& c : cfg_.centers()) v -= fam_.w_r2(cfg_.mu(), distance2(y, c.coords()));
  return v;
}

Field Ansatz::U_star_field() const {
  return Field([self = *this](std::span<const double> y) { return self.U_star(y); });
}

Field Ansatz::residual_field() const {
  return Field([self = *this](std::span<const double> y) { return self.sample(y).E; });
}

double residual(const Ansatz& a, std::span<const double> y) { return a.sample(y).E; }

double nonlinear_remainder_value(const BubbleFamily& fam, double u, double phi) {
  return fam.signed_pow_p(u + phi) - fam.signed_pow_p(u) - fam.p() * fam.pow_pm1(std::abs(u)) * phi;
}

double nonlinear_remainder(const Ansatz& a, const Field& phi, std::span<const double> y) {
  return nonlinear_remainder_value(a.family(), a.U_star(y), phi(y));
}

Field nonlinear_remainder_field(const Ansatz& a, const Field& phi) {
  return Field([a, phi](std::span<const double> y) { return nonlinear_remainder(a, phi, y); });
}

double cutoff_profile(double t) {
  if (t <= 0.5) return 1.0;
  if (t >= 1.0) return 0.0;
  const double x = 2.0 * (t - 0.5);
  return 1.0 - x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

namespace {

// y itself inside the unit ball, y/|y|^2 outside.
Point reflected(std::span<const double> y) {
  Point z(y);
  const double r2 = z.norm2();
  if (r2 >= 1.0)
    for (int i = 0; i < z.dim(); ++i) z[i] /= r2;
  return z;
}

double cutoff_at(const BubbleConfig& cfg, int j, const Point& z) {
  const double d = std::sqrt(distance2(z.coords(), cfg.center(j).coords()));
  return cutoff_profile(cfg.k() / cfg.eta() * d);
}

}  // namespace

double cutoff(const BubbleConfig& cfg, int j, std::span<const double> y) {
  if (j < 1 || j > cfg.k()) throw std::out_of_range("bubble index out of range");
  return cutoff_at(cfg, j, reflected(y));
}

double cutoff_sum(const BubbleConfig& cfg, std::span<const double> y) {
  const int k = cfg.k();
  if (k == 0) return 0.0;
  const Point z = reflected(y);
  if (k <= 3) {
    double s = 0.0;
    for (int j = 1; j <= k; ++j) s += cutoff_at(cfg, j, z);
    return s;
  }
  const double theta = std::atan2(z[1], z[0]);
  int j0 = static_cast<int>(std::lround(theta * k / (2.0 * std::numbers::pi)));
  j0 = ((j0 % k) + k) % k;
  double s = 0.0;
  for (int d = -1; d <= 1; ++d) s += cutoff_at(cfg, ((j0 + d + k) % k) + 1, z);
  return s;
}

Field cutoff_field(const BubbleConfig& cfg, int j) {
  if (j < 1 || j > cfg.k()) throw std::out_of_range("bubble index out of range");
  return Field([cfg, j](std::span<const double> y) { return cutoff(cfg, j, y); });
}

double GluedOperators::V1(std::span<const double> y) const {
  const auto& fam = a_.family();
  const auto smp = a_.sample(y);
  return -fam.p() * (fam.pow_pm1(std::abs(smp.U_star)) - fam.pow_pm1(smp.U)) * (1.0 - zeta_sum(y));
}

double GluedOperators::V2(std::span<const double> y) const {
  const auto& fam = a_.family();
  return fam.p() * fam.pow_pm1(fam.U_r2(norm2(y))) * zeta_sum(y);
}

double GluedOperators::M1(std::span<const double> y, std::span<const double> phi_j) const {
  const auto& fam = a_.family();
  const auto& cfg = a_.config();
  double acc = 0.0;
  for (int j = 1; j <= cfg.k(); ++j) acc += (1.0 - cutoff(cfg, j, y)) * phi_j[static_cast<std::size_t>(j - 1)];
  return -fam.p() * fam.pow_pm1(std::abs(a_.U_star(y))) * acc;
}

double GluedOperators::M2(std::span<const double> y) const { return (1.0 - zeta_sum(y)) * a_.residual(y); }

double GluedOperators::M3(std::span<const double> y, double phi_sum, double psi) const {
  return -(1.0 - zeta_sum(y)) * nonlinear_remainder_value(a_.family(), a_.U_star(y), phi_sum + psi);
}

Field GluedOperators::V1_field() const {
  return Field([self = *this](std::span<const double> y) { return self.V1(y); });
}
Field GluedOperators::V2_field() const {
  return Field([self = *this](std::span<const double> y) { return self.V2(y); });
}
Field GluedOperators::M1_field(const std::vector<Field>& phi_j) const {
  return Field([self = *this, phi_j](std::span<const double> y) {
    std::vector<double> vals(phi_j.size());
    for (std::size_t i = 0; i < phi_j.size(); ++i) vals[i] = phi_j[i](y);
    return self.M1(y, vals);
  });
}
Field GluedOperators::M2_field() const {
  return Field([self = *this](std::span<const double> y) { return self.M2(y); });
}
Field GluedOperators::M3_field(const Field& phi_sum, const Field& psi) const {
  return Field([self = *this, phi_sum, psi](std::span<const double> y) { return self.M3(y, phi_sum(y), psi(y)); });
}

GluedOperators::Pieces GluedOperators::f_pieces(std::span<const double> y, double phi1, double phi_sum,
                                                double psi) const {
  const auto& fam = a_.family();
  const auto& cfg = a_.config();
  const auto smp = a_.sample(y);
  const double z1 = cfg.k() > 0 ? cutoff(cfg, 1, y) : 0.0;
  const double U1 = cfg.k() > 0 ? rescaled_bubble(fam, cfg, 1, y) : 0.0;
  const double p = fam.p();
  const double us = fam.pow_pm1(std::abs(smp.U_star));
  const double u1 = fam.pow_pm1(U1);
  return {p * z1 * (u1 - us) * phi1, p * (1.0 - z1) * u1 * phi1, -p * z1 * us * psi,
          -z1 * nonlinear_remainder_value(fam, smp.U_star, phi_sum + psi), z1 * smp.E};
}

GluedOperators glued_potentials(const Ansatz& a) { return GluedOperators(a); }

}  // namespace fracbubbles
