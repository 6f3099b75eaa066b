#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fracbubbles/ansatz.hpp"
#include "fracbubbles/bubbles.hpp"
#include "fracbubbles/core.hpp"
#include "fracbubbles/gmres.hpp"
#include "fracbubbles/quadrature.hpp"

namespace fracbubbles {

/// Periodic box [-L, L]^N with n cell-centred nodes per side.
struct GridSpec {
  int N = 3;
  int n = 128;
  double L = 16.0;
  double window = 8.0;  // taper runs over L - window < |y| < L

  double h() const { return 2.0 * L / n; }
  std::size_t size() const;
  double coord(int i) const { return -L + (i + 0.5) * h(); }
  /// Throws ConfigError unless n >= 16 is a power of two, L >= 4, 0 < window < L.
  void validate() const;
  /// Whether the spacing resolves scale mu (h <= mu / 2).
  bool resolves(double mu) const { return h() <= 0.5 * mu; }
  nlohmann::json to_json() const;
};

/// 1 for |y| <= L - window, 0 for |y| >= L.
double taper(const GridSpec& g, double r);

class GridField {
 public:
  GridField() = default;
  explicit GridField(const GridSpec& spec);
  GridField(const GridSpec& spec, std::vector<double> data);

  static GridField sample(const GridSpec& spec, const Integrand& f, bool tapered = false);

  const GridSpec& spec() const { return spec_; }
  std::size_t size() const { return v_.size(); }
  std::span<double> data() { return v_; }
  std::span<const double> data() const { return v_; }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }

  /// Node coordinates of flat index i (first coordinate slowest).
  void point(std::size_t i, std::span<double> y) const;
  /// Tensor-product cubic interpolation; 0 outside the box.
  double interpolate(std::span<const double> y) const;

  /// Discrete L2 norm sqrt(h^N sum v^2).
  double l2() const;
  double max_abs() const;
  /// max |v| over the interior half-box |y|_inf <= L/2.
  double interior_max_abs() const;

  GridField& operator+=(const GridField& o);
  GridField& operator-=(const GridField& o);
  GridField& operator*=(double t);

 private:
  GridSpec spec_;
  std::vector<double> v_;
};

/// max over the interior half-box of |a - b|.
double interior_max_diff(const GridField& a, const GridField& b);

/// Fourier multiplier |xi|^{2s} on one grid, zero at the zero frequency.
/// Owns its transform buffers: use one instance per thread.
class FracLaplacian {
 public:
  FracLaplacian(const GridSpec& spec, double s);
  ~FracLaplacian();
  FracLaplacian(const FracLaplacian&) = delete;
  FracLaplacian& operator=(const FracLaplacian&) = delete;

  const GridSpec& spec() const { return spec_; }
  double s() const { return s_; }

  void apply(std::span<const double> in, std::span<double> out);
  /// (|xi|^{2s} + sigma)^{-1}.
  void apply_shifted_inverse(std::span<const double> in, std::span<double> out, double sigma);
  /// <(-D)^{s/2} f, (-D)^{s/2} g> on the grid, with the h^N factor.
  double energy(std::span<const double> f);

  /// Forward transform of f times the symbol, collapsed onto the first axis
  /// and evaluated at points (x, 0, ..., 0).
  std::vector<double> axis_values(std::span<const double> f, std::span<const double> x);

 private:
  struct Impl;
  GridSpec spec_;
  double s_;
  std::unique_ptr<Impl> impl_;
};

GridField frac_laplacian(const GridField& f, double s);

/// (-D)^s phi - p U^{p-1} phi on the grid.
GridField apply_L0(const GridField& phi, const BubbleFamily& fam);

struct Calibration {
  Amplitude amplitude;
  double closed_form_c = 0.0;
  double rel_sup_error = 0.0;  // interior half-box, |(-D)^s U - U^p| / max U^p
};

/// Least-squares fit of c^{p-1} over |y| <= core_radius, then the error of the
/// calibrated bubble on the interior half-box.
Calibration calibrate_amplitude(const ProblemParams& params, const GridSpec& grid = {}, double core_radius = 1.0);

/// Radial profile g(r) = (-D)^s U computed spectrally for r <= 1 and extended by
/// g(r) = r^{-(N+2s)} g(1/r).
class RadialProfile {
 public:
  RadialProfile(const BubbleFamily& fam, const GridSpec& grid, int table = 4097);
  double operator()(double r) const;

 private:
  std::vector<double> table_;
  double exponent_;
};

struct ResidualOracle {
  double rel_sup_error = 0.0;  // max |E - E_spec| / max |E| on interior nodes
  double max_abs_E = 0.0;
  double origin_closed = 0.0;
  double origin_spectral = 0.0;
  double origin_rel_error = 0.0;  // |difference at 0| / max |E|
};

/// Closed-form residual against (-D)^s U* - |U*|^{p-1} U* built from the
/// spectral profile through translation and dilation covariance.
ResidualOracle residual_oracle(const Ansatz& a, const GridSpec& grid);

/// Sampled translation/dilation kernels and the Gram matrix <U^{p-1} v_l, v_m>.
struct KernelSet {
  std::vector<int> l;
  std::vector<GridField> v;
  std::vector<GridField> Wv;  // U^{p-1} v_l
  std::vector<double> gram;   // row-major, size l.size()^2
};
KernelSet kernel_set(const BubbleFamily& fam, const GridSpec& grid, std::vector<int> ls);

struct SolveOptions {
  double tol = 1e-8;
  double sigma = 1.0;
  int restart = 40;
  int max_iter = 600;
};

struct ProjectedSolve {
  GridField phi;
  std::vector<double> coeffs;   // removed components of h along U^{p-1} v_l
  double pre_violation = 0.0;   // max |<h, v_l>| / (||h|| ||v_l||) before projection
  GmresResult gmres;
};

/// Solves (-D)^s phi - W phi = h - sum c_l U^{p-1} v_l with
/// <U^{p-1} v_l, phi> = 0. W defaults to p U^{p-1}.
ProjectedSolve projected_solve(const GridField& h, const BubbleFamily& fam, SolveOptions opt = {});
ProjectedSolve projected_solve(const GridField& h, const GridField& W, const KernelSet& K, FracLaplacian& D,
                               SolveOptions opt = {});

/// Symmetries of the configuration that map the grid onto itself: the part
/// of the dihedral group inside the square group, times sign flips of
/// y3..yN.
class GridSymmetry {
 public:
  GridSymmetry(const GridSpec& spec, int k);
  int order() const { return static_cast<int>(planar_.size()) << (spec_.N - 2); }
  void symmetrize(std::span<double> f) const;
  /// max_g max_i |f(g i) - f(i)|.
  double defect(std::span<const double> f) const;

 private:
  std::size_t image(std::size_t idx, int planar, int mask) const;
  GridSpec spec_;
  std::vector<int> planar_;  // bit0 swap, bit1 negate first, bit2 negate second
};

enum class RefineMode { Direct, Gluing };

struct RefineOptions {
  RefineMode mode = RefineMode::Direct;
  double tol = 1e-6;        // stop once residual <= tol * ansatz residual
  int max_iter = 60;
  double gmres_tol = 1e-7;
  double sigma = 1.0;
  int local_n = 64;         // gluing: local rescaled grid
  double local_L = 16.0;
  int inner_iter = 40;      // gluing: psi contraction sweeps
  double inner_tol = 1e-10;
  int continuation_steps = 10;  // direct: E is switched on in this many stages
  int stage_iter = 10;          // direct: Newton budget per intermediate stage
  double stage_tol = 1e-4;      // direct: relative target of intermediate stages
};

struct RefineStep {
  int iter = 0;
  double residual_norm = 0.0;
  double damping = 1.0;
  int linear_iterations = 0;
};

struct RefineResult {
  GridField phi;  // correction on the grid; u_k = U* + phi at the nodes
  GridField u;
  std::vector<RefineStep> history;
  double ansatz_residual = 0.0;
  double final_residual = 0.0;
  bool converged = false;
  bool diverged = false;
  std::vector<std::string> warnings;
  std::vector<double> contraction;  // gluing: successive distance ratios
  double kernel_coefficient = 0.0;  // gluing: c_{N+1} of the local solve
  GridField local_phi;              // gluing: rescaled first-bubble correction
  std::vector<double> f_pieces;     // gluing: max |f_1| .. |f_5| on the local grid
};

RefineResult refine(const Ansatz& a, const GridSpec& grid, RefineOptions opt = {});

/// U*(y) + phi(y) with phi interpolated.
double refined_value(const Ansatz& a, const GridField& phi, std::span<const double> y);

/// max |u(R y) - u(y)| / max |u| over sample points, R the 2 pi / k rotation,
/// with the correction interpolated off the grid.
double rotation_defect(const Ansatz& a, const GridField& phi, int samples = 200);

struct EnergyIdentity {
  double lhs = 0.0;  // <(-D)^{s/2} u, (-D)^{s/2} u>
  double rhs = 0.0;  // int |u|^{p+1}
  double rel_defect = 0.0;
};
EnergyIdentity energy_identity(const Ansatz& a, const GridField& phi, QuadratureOptions opt = {});

/// Raw little-endian float64 samples plus a JSON sidecar at path + ".json".
void export_grid(const GridField& f, const std::string& path, const nlohmann::json& meta);

}  // namespace fracbubbles
