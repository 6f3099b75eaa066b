#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fracbubbles/ansatz.hpp"
#include "fracbubbles/bubbles.hpp"
#include "fracbubbles/core.hpp"

namespace fracbubbles {

using Integrand = std::function<double(std::span<const double>)>;

/// Gauss-Legendre nodes and weights on [a, b].
struct Rule1D {
  std::vector<double> x;
  std::vector<double> w;
};
Rule1D gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Points on the unit sphere S^m in R^{m+1} with weights summing to |S^m|.
/// `n` sets the polar resolution; circles carry 2n points.
struct SphereRule {
  int dim = 1;  // ambient dimension m+1
  std::vector<double> x;  // row-major, dim per point
  std::vector<double> w;
  std::size_t size() const { return w.size(); }
};
SphereRule sphere_rule(int m, int n);

/// |S^{N-1}|.
double sphere_area(int N);

/// |S^{N-1}| int_0^inf g(r) r^{N-1} dr for radial integrands.
double radial_integral(const std::function<double(double)>& g, int N, int order = 16);

struct QuadratureOptions {
  double gradation = 1.5;      // ratio of successive radial panels near a center
  double inner_scale = 1e-2;   // innermost graded radius, in units of mu
  int order = 8;               // Gauss-Legendre points per panel
  int angular = 12;            // polar resolution of the sphere rules
  double tube_width = 0.5;     // radius of the tube around the center circle
  double tol = 1e-2;           // relative tolerance on normed values
};

/// Contributions by mesh piece and by location relative to the balls
/// B(xi_j, eta/k).
struct RegionBreakdown {
  double core = 0.0;
  double tube = 0.0;
  double bulk = 0.0;
  double far = 0.0;
  double ball_first = 0.0;   // inside B(xi_1, eta/k)
  double ball_others = 0.0;  // inside B(xi_j, eta/k), j >= 2
  double exterior = 0.0;
  double total() const { return core + tube + bulk + far; }
};

/// Whether an integrand is invariant under rotation by 2 pi / k.
enum class Symmetry { None, Rotation };

/// Nodes for one rotation sector around bubble 1; the whole space is the
/// union of the k rotated sectors.
class QuadratureScheme {
 public:
  explicit QuadratureScheme(const BubbleConfig& cfg, QuadratureOptions opt = {}, int level = 0);

  const BubbleConfig& config() const { return cfg_; }
  const QuadratureOptions& options() const { return opt_; }
  int level() const { return level_; }
  std::size_t size() const { return w_.size(); }
  int sectors() const { return sectors_; }
  QuadratureScheme refined() const { return QuadratureScheme(cfg_, opt_, level_ + 1); }

  /// Integral of f over R^N.
  RegionBreakdown integrate(const Integrand& f, Symmetry sym = Symmetry::None) const;
  /// Integral of a(y) b(y) where a is rotation invariant and b is arbitrary.
  RegionBreakdown integrate_product(const Integrand& invariant, const Integrand& other) const;

  /// Row-major node coordinates of the sector (for inspection and tests).
  std::span<const double> coords() const { return x_; }
  std::span<const double> weights() const { return w_; }

 private:
  enum Piece : unsigned char { Core, Tube, Bulk, Far };
  void add(std::span<const double> y, double w, Piece piece, bool in_ball);
  void build_core();
  void build_tube();
  void build_bulk_far();
  Point rotate(std::span<const double> y, int m) const;
  RegionBreakdown accumulate(std::size_t nodes_width, const std::function<void(std::size_t, std::span<double>)>& fill) const;

  BubbleConfig cfg_;
  QuadratureOptions opt_;
  int level_;
  int N_;
  int sectors_;
  double core_radius_ = 0.0;
  std::vector<double> x_;
  std::vector<double> w_;
  std::vector<unsigned char> piece_;
  std::vector<unsigned char> ball_;
  std::vector<double> rot_cos_, rot_sin_;
};

struct NormResult {
  double value = 0.0;
  double est_rel_error = 0.0;
  bool converged = true;
  RegionBreakdown region_breakdown;  // of the q-th power (or of the integral)
};

/// ||(1+|y|)^{N+2s-2N/q} h||_{L^q}, two refinement levels compared.
NormResult norm_starstar(const Integrand& h, const ProblemParams& params, const QuadratureScheme& scheme,
                         Symmetry sym = Symmetry::None);

/// int h v_l over R^N; est_rel_error holds the absolute level difference
/// divided by max(|value|, 1e-300).
NormResult project_kernel(const Integrand& h, int l, const BubbleFamily& fam, const QuadratureScheme& scheme,
                          Symmetry sym = Symmetry::None);

/// Level-0 / level-1 comparison of a raw integral.
NormResult integrate_checked(const Integrand& f, const QuadratureScheme& scheme, Symmetry sym = Symmetry::None);

struct StarResult {
  double value = 0.0;
  Point argmax;
  int candidates = 0;
};

/// sup (1+|y|)^{N-2s} |phi(y)| over structured candidates (origin, the
/// given centers and shells around them, rays out to large radii), each
/// polished by golden-section search along its ray. A lower bound.
StarResult norm_star(const Integrand& phi, const ProblemParams& params, std::span<const Point> centers = {},
                     int budget = 4096);

}  // namespace fracbubbles
