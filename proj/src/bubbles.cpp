#include "fracbubbles/bubbles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fracbubbles {

PowerFn::PowerFn(double e) : e_(e) {
  const double twice = 2.0 * e;
  if (std::abs(e - std::round(e)) < 1e-14 && std::abs(e) <= 16) {
    kind_ = Kind::Int;
    n_ = static_cast<int>(std::lround(e));
  } else if (std::abs(twice - std::round(twice)) < 1e-14 && std::abs(e) <= 16) {
    kind_ = Kind::Half;
    n_ = static_cast<int>(std::floor(e));
  }
}

Amplitude Amplitude::closed_form(const ProblemParams& params) {
  const double N = params.N();
  const double s = params.s();
  const double lg = 2.0 * s * std::log(2.0) + std::lgamma((N + 2.0 * s) / 2.0) - std::lgamma((N - 2.0 * s) / 2.0);
  return {std::exp(lg / (params.p() - 1.0))};
}

Field Field::abs() const {
  auto f = fn_;
  return Field([f](std::span<const double> y) { return std::abs(f(y)); });
}

Field Field::abs_pow(double e) const {
  auto f = fn_;
  PowerFn pw(e);
  return Field([f, pw](std::span<const double> y) { return pw(std::abs(f(y))); });
}

Field operator+(const Field& a, const Field& b) {
  return Field([a, b](std::span<const double> y) { return a(y) + b(y); });
}
Field operator-(const Field& a, const Field& b) {
  return Field([a, b](std::span<const double> y) { return a(y) - b(y); });
}
Field operator*(const Field& a, const Field& b) {
  return Field([a, b](std::span<const double> y) { return a(y) * b(y); });
}
Field operator*(double t, const Field& a) {
  return Field([t, a](std::span<const double> y) { return t * a(y); });
}
Field operator-(const Field& a) {
  return Field([a](std::span<const double> y) { return -a(y); });
}

BubbleFamily::BubbleFamily(const ProblemParams& params, Amplitude amp)
    : params_(params),
      amp_(amp),
      decay_(-params.alpha() / 2.0),
      decay1_(-params.alpha() / 2.0 - 1.0),
      half_alpha_pow_(params.alpha() / 2.0),
      pow_p_(params.p()),
      pow_pm1_(params.p() - 1.0) {
  if (!(amp.c > 0.0)) throw ConfigError("bubble amplitude must be positive");
}

double BubbleFamily::kernel(int l, std::span<const double> y) const {
  const int N = params_.N();
  if (l < 1 || l > N + 1) throw std::out_of_range("kernel index must lie in [1, N+1]");
  const double r2 = norm2(y);
  const double base = amp_.c * decay1_(1.0 + r2);
  if (l <= N) return -params_.alpha() * y[static_cast<std::size_t>(l - 1)] * base;
  return 0.5 * params_.alpha() * (1.0 - r2) * base;
}

double BubbleFamily::rescaled_kernel(int l, double mu, std::span<const double> xi, std::span<const double> y) const {
  Point z(static_cast<int>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) z[static_cast<int>(i)] = (y[i] - xi[i]) / mu;
  return mu_pref(mu) * kernel(l, z.coords());
}

double std_bubble(const BubbleFamily& fam, std::span<const double> y) { return fam.U_r2(norm2(y)); }

double rescaled_bubble(const BubbleFamily& fam, const BubbleConfig& cfg, int j, std::span<const double> y) {
  const Point& xi = cfg.center(j);
  return fam.w_r2(cfg.mu(), distance2(y, xi.coords()));
}

double kernel(const BubbleFamily& fam, int l, std::span<const double> y) { return fam.kernel(l, y); }

Field std_bubble_field(const BubbleFamily& fam) {
  return Field([fam](std::span<const double> y) { return fam.U_r2(norm2(y)); });
}

Field bubble_field(const BubbleFamily& fam, double mu, const Point& xi) {
  return Field([fam, mu, xi](std::span<const double> y) { return fam.w_r2(mu, distance2(y, xi.coords())); });
}

Field rescaled_bubble_field(const BubbleFamily& fam, const BubbleConfig& cfg, int j) {
  return bubble_field(fam, cfg.mu(), cfg.center(j));
}

Field kernel_field(const BubbleFamily& fam, int l) {
  if (l < 1 || l > fam.params().N() + 1) throw std::out_of_range("kernel index must lie in [1, N+1]");
  return Field([fam, l](std::span<const double> y) { return fam.kernel(l, y); });
}

double kelvin(const Field& f, const ProblemParams& params, std::span<const double> y, KelvinMode mode) {
  const double r2 = norm2(y);
  if (r2 == 0.0) throw std::domain_error("Kelvin transform undefined at the origin");
  Point z(static_cast<int>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) z[static_cast<int>(i)] = y[i] / r2;
  const double e = mode == KelvinMode::Standard ? (2.0 * params.s() - params.N()) : -(params.N() + 2.0 * params.s());
  return std::pow(r2, 0.5 * e) * f(z.coords());
}

Field kelvin_field(const Field& f, const ProblemParams& params, KelvinMode mode) {
  return Field([f, params, mode](std::span<const double> y) { return kelvin(f, params, y, mode); });
}

SymmetryGroup::SymmetryGroup(int k, int N) : k_(k), N_(N) {
  if (k < 1) throw ConfigError("symmetry group needs k >= 1");
  if (N < 2 || N > kMaxDim) throw ConfigError("symmetry group dimension out of range");
  for (int m = 0; m < k; ++m) {
    const double t = 2.0 * std::numbers::pi * m / k;
    cos_.push_back(std::cos(t));
    sin_.push_back(std::sin(t));
  }
}

Point SymmetryGroup::apply(int g, std::span<const double> y) const {
  if (g < 0 || g >= order()) throw std::out_of_range("group element out of range");
  const int m = g % k_;
  const int mask = g / k_;
  Point z(y);
  for (int i = 1; i < N_; ++i)
    if (mask & (1 << (i - 1))) z[i] = -z[i];
  const double a = z[0], b = z[1];
  z[0] = cos_[m] * a - sin_[m] * b;
  z[1] = sin_[m] * a + cos_[m] * b;
  return z;
}

std::vector<Point> symmetry_orbit(const BubbleConfig& cfg, std::span<const double> y) {
  const SymmetryGroup group(std::max(cfg.k(), 1), static_cast<int>(y.size()));
  std::vector<Point> out;
  for (int g = 0; g < group.order(); ++g) {
    Point z = group.apply(g, y);
    bool seen = false;
    for (const auto& w : out)
      if (distance2(w.coords(), z.coords()) < 1e-24 * (1.0 + z.norm2())) {
        seen = true;
        break;
      }
    if (!seen) out.push_back(z);
  }
  return out;
}

}  // namespace fracbubbles
