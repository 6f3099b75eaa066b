#pragma once

#include <vector>

#include "fracbubbles/ansatz.hpp"
#include "fracbubbles/core.hpp"
#include "fracbubbles/quadrature.hpp"

namespace fracbubbles {

/// S_k = sum_{j>=2} |xi_1 - xi_j|^{-(N-2s)} for the configuration's centers.
double interaction_sum(const BubbleConfig& cfg, double alpha);
double interaction_sum(const BubbleConfig& cfg, const ProblemParams& params);
/// The same sum for k points on the unit circle.
double interaction_sum_unit(int k, double alpha);

struct ANEstimate {
  double value = 0.0;
  double error = 0.0;  // difference of the last two extrapolants
  bool converged = true;
  std::vector<int> k;
  std::vector<double> finite_k;     // 2^{(N-2s)/2} S_k / k^{N-2s}
  std::vector<double> extrapolants; // Richardson in 1/k^2 on consecutive pairs
};

/// Interaction constant 2^{(N-2s)/2} lim S_k / k^{N-2s}.
ANEstimate a_N(const ProblemParams& params, const std::vector<int>& k_sequence = {250, 500, 1000, 2000});

/// p int U^{p-1} v_{N+1}; checked against a refined level.
NormResult C_N(const BubbleFamily& fam, QuadratureOptions opt = {});
/// The same constant from the one-dimensional radial rule.
double C_N_radial(const BubbleFamily& fam);

/// 1 / a_N.
double delta_star(const ANEstimate& a);

/// C_N (delta / k^{N-2s}) (delta a_N - 1).
double leading_projection(double C, double aN, const ProblemParams& params, int k, double delta);

struct ProjectionResult {
  double value = 0.0;
  double est_rel_error = 0.0;
  double ball_first = 0.0;
  double ball_others = 0.0;
  double exterior = 0.0;
};

/// int E v~_{N+1} with v~_{N+1} = mu^{-(N-2s)/2} v_{N+1}((y - xi_1)/mu).
ProjectionResult numerical_projection(const Ansatz& a, QuadratureOptions opt = {});

struct Bracket {
  bool found = false;
  double lo = 0.0;
  double hi = 0.0;
};

/// First consecutive pair of deltas whose projections differ in sign.
Bracket sign_bracket(const std::vector<double>& deltas, const std::vector<double>& values);

}  // namespace fracbubbles
