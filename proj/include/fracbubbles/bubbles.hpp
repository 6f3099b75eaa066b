#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "fracbubbles/core.hpp"

namespace fracbubbles {

/// x^e specialised once for a fixed exponent (small integers and half
/// integers avoid std::pow). Only defined for x >= 0.
class PowerFn {
 public:
  explicit PowerFn(double e);
  double operator()(double x) const {
    switch (kind_) {
      case Kind::Int: return ipow(x, n_);
      case Kind::Half: return ipow(x, n_) * std::sqrt(x);
      default: return std::pow(x, e_);
    }
  }
  double exponent() const { return e_; }

 private:
  enum class Kind { Int, Half, General };
  static double ipow(double x, int n) {
    if (n < 0) return 1.0 / ipow(x, -n);
    double r = 1.0;
    while (n) {
      if (n & 1) r *= x;
      x *= x;
      n >>= 1;
    }
    return r;
  }
  double e_;
  int n_ = 0;
  Kind kind_ = Kind::General;
};

/// Normalisation c_{N,s} of the standard bubble.
struct Amplitude {
  double c = 1.0;

  /// c^{p-1} = 2^{2s} Gamma((N+2s)/2) / Gamma((N-2s)/2).
  static Amplitude closed_form(const ProblemParams& params);
};

/// Pointwise scalar field on R^N. Cheap to copy; evaluation is pure.
class Field {
 public:
  using Fn = std::function<double(std::span<const double>)>;

  Field() : fn_([](std::span<const double>) { return 0.0; }) {}
  explicit Field(Fn fn) : fn_(std::move(fn)) {}

  double operator()(std::span<const double> y) const { return fn_(y); }

  static Field zero() { return Field(); }
  static Field constant(double v) {
    return Field([v](std::span<const double>) { return v; });
  }

  Field abs() const;
  /// |f|^e (e > 0).
  Field abs_pow(double e) const;

 private:
  Fn fn_;
};

Field operator+(const Field& a, const Field& b);
Field operator-(const Field& a, const Field& b);
Field operator*(const Field& a, const Field& b);
Field operator*(double t, const Field& a);
Field operator-(const Field& a);

/// Closed-form bubble family for one (N, s) and one amplitude.
class BubbleFamily {
 public:
  BubbleFamily(const ProblemParams& params, Amplitude amp);
  explicit BubbleFamily(const ProblemParams& params)
      : BubbleFamily(params, Amplitude::closed_form(params)) {}

  const ProblemParams& params() const { return params_; }
  double c() const { return amp_.c; }
  double p() const { return params_.p(); }

  /// U as a function of |y|^2.
  double U_r2(double r2) const { return amp_.c * decay_(1.0 + r2); }
  /// w_mu(x) as a function of |x|^2.
  double w_r2(double mu, double r2) const { return mu_pref(mu) * U_r2(r2 / (mu * mu)); }
  double mu_pref(double mu) const { return 1.0 / half_alpha_pow_(mu); }

  /// z^p and z^{p-1} for z >= 0.
  double pow_p(double z) const { return pow_p_(z); }
  double pow_pm1(double z) const { return pow_pm1_(z); }
  /// sign(z)|z|^p.
  double signed_pow_p(double z) const { return z >= 0.0 ? pow_p_(z) : -pow_p_(-z); }

  /// v_l (1-based) at y; l <= N translations, l = N+1 dilation.
  double kernel(int l, std::span<const double> y) const;
  /// mu^{-(N-2s)/2} v_l((y - xi)/mu).
  double rescaled_kernel(int l, double mu, std::span<const double> xi, std::span<const double> y) const;

 private:
  ProblemParams params_;
  Amplitude amp_;
  PowerFn decay_;        // x^{-(N-2s)/2}
  PowerFn decay1_;       // x^{-(N-2s)/2 - 1}
  PowerFn half_alpha_pow_;
  PowerFn pow_p_;
  PowerFn pow_pm1_;
};

/// U(y) = c (1+|y|^2)^{-(N-2s)/2}.
double std_bubble(const BubbleFamily& fam, std::span<const double> y);
/// U_j(y) = w_mu(y - xi_j), 1-based j.
double rescaled_bubble(const BubbleFamily& fam, const BubbleConfig& cfg, int j, std::span<const double> y);
/// v_l(y), 1-based l in [1, N+1]; throws std::out_of_range otherwise.
double kernel(const BubbleFamily& fam, int l, std::span<const double> y);

Field std_bubble_field(const BubbleFamily& fam);
Field bubble_field(const BubbleFamily& fam, double mu, const Point& xi);
Field rescaled_bubble_field(const BubbleFamily& fam, const BubbleConfig& cfg, int j);
Field kernel_field(const BubbleFamily& fam, int l);

enum class KelvinMode {
  Standard,   // |y|^{2s-N} f(y/|y|^2)
  Covariant,  // |y|^{-(N+2s)} f(y/|y|^2)
};

/// Kelvin transform of f evaluated at y != 0 (std::domain_error at the origin).
double kelvin(const Field& f, const ProblemParams& params, std::span<const double> y,
              KelvinMode mode = KelvinMode::Standard);
Field kelvin_field(const Field& f, const ProblemParams& params, KelvinMode mode = KelvinMode::Standard);

/// Rotations by 2 pi m / k in the (y1, y2) plane composed with sign flips of
/// y2..yN. Order k 2^{N-1}.
class SymmetryGroup {
 public:
  SymmetryGroup(int k, int N);

  int order() const { return k_ << (N_ - 1); }
  int k() const { return k_; }
  int dim() const { return N_; }

  /// Element index g in [0, order): rotation m = g % k, flip mask g / k
  /// (bit i flips coordinate i+1). The flip is applied first.
  Point apply(int g, std::span<const double> y) const;

 private:
  int k_;
  int N_;
  std::vector<double> cos_;
  std::vector<double> sin_;
};

/// Distinct images of y under the group (duplicates merged at 1e-12).
std::vector<Point> symmetry_orbit(const BubbleConfig& cfg, std::span<const double> y);

}  // namespace fracbubbles
