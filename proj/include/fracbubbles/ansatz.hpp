#pragma once

#include <span>
#include <vector>

#include "fracbubbles/bubbles.hpp"
#include "fracbubbles/core.hpp"

namespace fracbubbles {

/// U* = U - sum_j U_j for one configuration.
class Ansatz {
 public:
  Ansatz(BubbleFamily fam, BubbleConfig cfg);

  const BubbleFamily& family() const { return fam_; }
  const BubbleConfig& config() const { return cfg_; }
  const ProblemParams& params() const { return fam_.params(); }

  /// Pointwise pieces of the ansatz at one location.
  struct Sample {
    double U = 0.0;
    double sum_Uj = 0.0;
    double U_star = 0.0;
    double E = 0.0;
    int nearest = 0;  // 1-based index of the largest U_j (0 when k = 0)
    double U_near = 0.0;
  };
  Sample sample(std::span<const double> y) const;

  double U_star(std::span<const double> y) const;
  double residual(std::span<const double> y) const { return sample(y).E; }

  Field U_star_field() const;
  Field residual_field() const;

 private:
  BubbleFamily fam_;
  BubbleConfig cfg_;
};

/// E(y) = U^p - sum U_j^p - |U*|^{p-1} U*, evaluated without cancellation
/// next to a dominant bubble.
double residual(const Ansatz& a, std::span<const double> y);

/// |u+phi|^{p-1}(u+phi) - |u|^{p-1}u - p|u|^{p-1}phi for scalars.
double nonlinear_remainder_value(const BubbleFamily& fam, double u, double phi);
double nonlinear_remainder(const Ansatz& a, const Field& phi, std::span<const double> y);
Field nonlinear_remainder_field(const Ansatz& a, const Field& phi);

/// Profile: 1 on [0, 1/2], 0 on [1, inf), quintic smoothstep between.
double cutoff_profile(double t);
/// zeta_j(y) with the Kelvin-reflected argument for |y| >= 1.
double cutoff(const BubbleConfig& cfg, int j, std::span<const double> y);
/// sum_j zeta_j(y), using that supports are disjoint.
double cutoff_sum(const BubbleConfig& cfg, std::span<const double> y);
Field cutoff_field(const BubbleConfig& cfg, int j);

/// Potentials and remainders of the glued system.
class GluedOperators {
 public:
  explicit GluedOperators(Ansatz a) : a_(std::move(a)) {}

  const Ansatz& ansatz() const { return a_; }

  double zeta_sum(std::span<const double> y) const { return cutoff_sum(a_.config(), y); }
  double V1(std::span<const double> y) const;
  double V2(std::span<const double> y) const;
  /// -p |U*|^{p-1} sum_j (1 - zeta_j) phi_j, phi given per bubble.
  double M1(std::span<const double> y, std::span<const double> phi_j) const;
  double M2(std::span<const double> y) const;
  /// -(1 - sum zeta) N(phi_sum + psi).
  double M3(std::span<const double> y, double phi_sum, double psi) const;

  Field V1_field() const;
  Field V2_field() const;
  Field M1_field(const std::vector<Field>& phi_j) const;
  Field M2_field() const;
  Field M3_field(const Field& phi_sum, const Field& psi) const;

  /// Decomposition of the first-bubble source.
  struct Pieces {
    double f1, f2, f3, f4, f5;
  };
  Pieces f_pieces(std::span<const double> y, double phi1, double phi_sum, double psi) const;

 private:
  Ansatz a_;
};

GluedOperators glued_potentials(const Ansatz& a);

}  // namespace fracbubbles
