#include "fracbubbles/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "fracbubbles/parallel.hpp"

namespace fracbubbles {

namespace {

constexpr double kPi = std::numbers::pi;

// C-infinity step: 0 for x <= 0, 1 for x >= 1.
double smooth_step(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / x);
  const double b = std::exp(-1.0 / (1.0 - x));
  return a / (a + b);
}

// 1 on [0, R/2], 0 beyond R.
double bump(double r, double R) { return 1.0 - smooth_step(2.0 * r / R - 1.0); }

std::vector<double> sorted_breaks(std::vector<double> b) {
  std::sort(b.begin(), b.end());
  std::vector<double> out;
  for (double v : b)
    if (out.empty() || v - out.back() > 1e-12 * std::max(1.0, std::abs(v))) out.push_back(v);
  return out;
}

// Composite rule over consecutive breakpoints.
Rule1D composite(const std::vector<double>& breaks, int order) {
  Rule1D out;
  const Rule1D ref = gauss_legendre(order);
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i], b = breaks[i + 1];
    for (int j = 0; j < order; ++j) {
      out.x.push_back(0.5 * (a + b) + 0.5 * (b - a) * ref.x[static_cast<std::size_t>(j)]);
      out.w.push_back(0.5 * (b - a) * ref.w[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

std::vector<double> uniform_breaks(double a, double b, int panels) {
  std::vector<double> out;
  for (int i = 0; i <= panels; ++i) out.push_back(a + (b - a) * i / panels);
  return out;
}

}  // namespace

Rule1D gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("Gauss-Legendre order must be positive");
  // P_n(x) and P_{n-1}(x) by the three-term recurrence.
  auto legendre = [n](double x) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    return std::pair{n == 0 ? 1.0 : p1, p0};
  };
  Rule1D r;
  r.x.resize(static_cast<std::size_t>(n));
  r.w.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [pn, pm] = legendre(x);
      const double dx = pn / (n * (x * pn - pm) / (x * x - 1.0));
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const auto [pn, pm] = legendre(x);
    const double dp = n * (x * pn - pm) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.x[static_cast<std::size_t>(i)] = -x;
    r.x[static_cast<std::size_t>(n - 1 - i)] = x;
    r.w[static_cast<std::size_t>(i)] = w;
    r.w[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  if (n % 2 == 1) r.x[static_cast<std::size_t>(n / 2)] = 0.0;
  for (std::size_t i = 0; i < r.x.size(); ++i) {
    r.x[i] = 0.5 * (a + b) + 0.5 * (b - a) * r.x[i];
    r.w[i] *= 0.5 * (b - a);
  }
  return r;
}

SphereRule sphere_rule(int m, int n) {
  SphereRule out;
  out.dim = m + 1;
  if (m == 0) {
    out.x = {-1.0, 1.0};
    out.w = {1.0, 1.0};
    return out;
  }
  if (m == 1) {
    const int nc = 2 * n;
    for (int i = 0; i < nc; ++i) {
      const double t = 2.0 * kPi * (i + 0.5) / nc;
      out.x.push_back(std::cos(t));
      out.x.push_back(std::sin(t));
      out.w.push_back(2.0 * kPi / nc);
    }
    return out;
  }
  const SphereRule sub = sphere_rule(m - 1, n);
  const Rule1D alpha = gauss_legendre(n, 0.0, kPi);
  for (std::size_t a = 0; a < alpha.x.size(); ++a) {
    const double sa = std::sin(alpha.x[a]);
    const double ca = std::cos(alpha.x[a]);
    const double wa = alpha.w[a] * std::pow(sa, m - 1);
    for (std::size_t i = 0; i < sub.size(); ++i) {
      for (int d = 0; d < sub.dim; ++d) out.x.push_back(sa * sub.x[i * static_cast<std::size_t>(sub.dim) + static_cast<std::size_t>(d)]);
      out.x.push_back(ca);
      out.w.push_back(wa * sub.w[i]);
    }
  }
  return out;
}

double sphere_area(int N) { return 2.0 * std::pow(kPi, 0.5 * N) / std::tgamma(0.5 * N); }

double radial_integral(const std::function<double(double)>& g, int N, int order) {
  CompensatedSum acc;
  const Rule1D inner = composite(uniform_breaks(0.0, 1.0, 16), order);
  for (std::size_t i = 0; i < inner.x.size(); ++i) acc.add(inner.w[i] * g(inner.x[i]) * std::pow(inner.x[i], N - 1));
  std::vector<double> ub{0.0};
  for (int i = 60; i >= 0; --i) ub.push_back(std::ldexp(1.0, -i));
  const Rule1D outer = composite(ub, order);
  for (std::size_t i = 0; i < outer.x.size(); ++i) {
    const double u = outer.x[i];
    acc.add(outer.w[i] * g(1.0 / u) * std::pow(u, -N - 1));
  }
  return sphere_area(N) * acc.value();
}

QuadratureScheme::QuadratureScheme(const BubbleConfig& cfg, QuadratureOptions opt, int level)
    : cfg_(cfg), opt_(opt), level_(level), N_(cfg.dim()), sectors_(std::max(cfg.k(), 1)) {
  if (opt_.order < 2) throw ConfigError("quadrature order must be at least 2");
  if (!(opt_.gradation > 1.0)) throw ConfigError("gradation ratio must exceed 1");
  if (!(opt_.tube_width > 0.0 && opt_.tube_width <= 0.5)) throw ConfigError("tube width must lie in (0, 0.5]");
  for (int m = 0; m < sectors_; ++m) {
    rot_cos_.push_back(std::cos(2.0 * kPi * m / sectors_));
    rot_sin_.push_back(std::sin(2.0 * kPi * m / sectors_));
  }
  if (cfg_.k() >= 1) {
    const double rho0 = cfg_.ring_radius();
    core_radius_ = 0.5 * opt_.tube_width;
    if (cfg_.k() >= 2) core_radius_ = std::min(core_radius_, 0.9 * rho0 * std::sin(kPi / cfg_.k()));
    if (!(cfg_.eta() / cfg_.k() < 0.5 * core_radius_))
      throw ConfigError("eta/k exceeds the inner core radius of the quadrature");
    build_core();
    build_tube();
  }
  build_bulk_far();
}

void QuadratureScheme::add(std::span<const double> y, double w, Piece piece, bool in_ball) {
  if (w == 0.0) return;
  x_.insert(x_.end(), y.begin(), y.end());
  w_.push_back(w);
  piece_.push_back(piece);
  ball_.push_back(in_ball ? 1 : 0);
}

void QuadratureScheme::build_core() {
  const int order = opt_.order + 4 * level_;
  const int ang = static_cast<int>(std::lround(opt_.angular * std::pow(1.5, level_)));
  const double R1 = core_radius_;
  const double ball = cfg_.eta() / cfg_.k();
  std::vector<double> br{0.0, ball, 0.5 * R1, R1};
  for (double a = cfg_.mu() * opt_.inner_scale; a < R1; a *= opt_.gradation) br.push_back(a);
  br = sorted_breaks(br);
  const Rule1D rr = composite(br, order);
  const SphereRule S = sphere_rule(N_ - 1, ang);
  const Point& xi = cfg_.center(1);
  Point y(N_);
  for (std::size_t i = 0; i < rr.x.size(); ++i) {
    const double r = rr.x[i];
    const double wr = rr.w[i] * std::pow(r, N_ - 1) * bump(r, R1);
    for (std::size_t a = 0; a < S.size(); ++a) {
      for (int d = 0; d < N_; ++d) y[d] = xi[d] + r * S.x[a * static_cast<std::size_t>(N_) + static_cast<std::size_t>(d)];
      add(y.coords(), wr * S.w[a], Core, r < ball);
    }
  }
}

void QuadratureScheme::build_tube() {
  const int order = opt_.order + 4 * level_;
  const int ang = static_cast<int>(std::lround(opt_.angular * std::pow(1.5, level_)));
  const double R1 = core_radius_;
  const double tw = opt_.tube_width;
  const double rho0 = cfg_.ring_radius();
  std::vector<double> br{0.0, 0.25 * R1, 0.5 * R1, 0.75 * R1, R1, 0.5 * tw, 0.75 * tw, tw};
  for (double a = R1; a < 0.5 * tw; a *= opt_.gradation) br.push_back(a);
  br = sorted_breaks(br);
  const Rule1D tr = composite(br, order);
  const double half = kPi / sectors_;
  const Rule1D pr = composite(uniform_breaks(-half, half, std::max(8, 64 / sectors_)), order);
  const SphereRule S = sphere_rule(N_ - 2, ang);
  const Point& xi = cfg_.center(1);
  Point y(N_);
  for (std::size_t i = 0; i < tr.x.size(); ++i) {
    const double t = tr.x[i];
    const double wt = tr.w[i] * std::pow(t, N_ - 2) * bump(t, tw);
    for (std::size_t a = 0; a < S.size(); ++a) {
      const double* om = &S.x[a * static_cast<std::size_t>(N_ - 1)];
      const double R = rho0 + t * om[0];
      for (std::size_t b = 0; b < pr.x.size(); ++b) {
        y[0] = R * std::cos(pr.x[b]);
        y[1] = R * std::sin(pr.x[b]);
        for (int d = 2; d < N_; ++d) y[d] = t * om[d - 1];
        const double dc = std::sqrt(distance2(y.coords(), xi.coords()));
        add(y.coords(), wt * S.w[a] * pr.w[b] * R * (1.0 - bump(dc, R1)), Tube, false);
      }
    }
  }
}

void QuadratureScheme::build_bulk_far() {
  const int order = opt_.order + 4 * level_;
  const int ang = static_cast<int>(std::lround(opt_.angular * std::pow(1.5, level_)));
  const bool ring = cfg_.k() >= 1;
  const double rho0 = ring ? cfg_.ring_radius() : 1.0;
  const double tw = opt_.tube_width;

  std::vector<double> br{0.0, 0.25, rho0 - tw, rho0 - 0.75 * tw, rho0 - 0.5 * tw, rho0, rho0 + 0.5 * tw,
                         rho0 + 0.75 * tw, rho0 + tw, 1.75, 2.0};
  br = sorted_breaks(br);
  const Rule1D rr = composite(br, order);

  std::vector<double> ub{0.0};
  for (int i = 24; i >= 0; --i) ub.push_back(std::ldexp(1.0, -i));
  const Rule1D ur = composite(ub, order);

  // Directions (cos b cos f, cos b sin f, sin b w'), b in [0, pi/2], w' in S^{N-3}.
  const double half = kPi / sectors_;
  const Rule1D pr = composite(uniform_breaks(-half, half, std::max(1, 16 / sectors_)), order);
  const Rule1D brule = composite(uniform_breaks(0.0, 0.5 * kPi, 6), order);
  const SphereRule S = sphere_rule(N_ - 3, ang);
  std::vector<double> dirs;
  std::vector<double> dw;
  for (std::size_t b = 0; b < brule.x.size(); ++b) {
    const double cb = std::cos(brule.x[b]), sb = std::sin(brule.x[b]);
    for (std::size_t f = 0; f < pr.x.size(); ++f)
      for (std::size_t a = 0; a < S.size(); ++a) {
        dirs.push_back(cb * std::cos(pr.x[f]));
        dirs.push_back(cb * std::sin(pr.x[f]));
        for (int d = 0; d < N_ - 2; ++d) dirs.push_back(sb * S.x[a * static_cast<std::size_t>(N_ - 2) + static_cast<std::size_t>(d)]);
        dw.push_back(brule.w[b] * cb * std::pow(sb, N_ - 3) * pr.w[f] * S.w[a]);
      }
  }
  const std::size_t ndir = dw.size();
  Point y(N_);
  for (std::size_t i = 0; i < rr.x.size(); ++i) {
    const double r = rr.x[i];
    const double wr = rr.w[i] * std::pow(r, N_ - 1);
    for (std::size_t a = 0; a < ndir; ++a) {
      for (int d = 0; d < N_; ++d) y[d] = r * dirs[a * static_cast<std::size_t>(N_) + static_cast<std::size_t>(d)];
      double chi = 1.0;
      if (ring) {
        const double planar = std::hypot(y[0], y[1]);
        double t2 = (planar - rho0) * (planar - rho0);
        for (int d = 2; d < N_; ++d) t2 += y[d] * y[d];
        chi = 1.0 - bump(std::sqrt(t2), tw);
      }
      add(y.coords(), wr * dw[a] * chi, Bulk, false);
    }
  }
  for (std::size_t i = 0; i < ur.x.size(); ++i) {
    const double u = 0.5 * ur.x[i];
    const double wu = 0.5 * ur.w[i] * std::pow(u, -N_ - 1);
    for (std::size_t a = 0; a < ndir; ++a) {
      for (int d = 0; d < N_; ++d) y[d] = dirs[a * static_cast<std::size_t>(N_) + static_cast<std::size_t>(d)] / u;
      add(y.coords(), wu * dw[a], Far, false);
    }
  }
}

Point QuadratureScheme::rotate(std::span<const double> y, int m) const {
  Point z(y);
  const double c = rot_cos_[static_cast<std::size_t>(m)], s = rot_sin_[static_cast<std::size_t>(m)];
  z[0] = c * y[0] - s * y[1];
  z[1] = s * y[0] + c * y[1];
  return z;
}

RegionBreakdown QuadratureScheme::accumulate(std::size_t, const std::function<void(std::size_t, std::span<double>)>& fill) const {
  const auto sums = parallel_sum_vec(w_.size(), 7, fill, 2048);
  RegionBreakdown r;
  r.core = sums[0];
  r.tube = sums[1];
  r.bulk = sums[2];
  r.far = sums[3];
  r.ball_first = sums[4];
  r.ball_others = sums[5];
  r.exterior = sums[6];
  return r;
}

RegionBreakdown QuadratureScheme::integrate(const Integrand& f, Symmetry sym) const {
  const auto n = static_cast<std::size_t>(N_);
  const double S = sectors_;
  if (sym == Symmetry::Rotation || sectors_ == 1) {
    return accumulate(0, [&](std::size_t i, std::span<double> out) {
      const double v = f(std::span<const double>(&x_[i * n], n)) * w_[i];
      out[piece_[i]] += S * v;
      if (ball_[i]) {
        out[4] += v;
        out[5] += (S - 1.0) * v;
      } else {
        out[6] += S * v;
      }
    });
  }
  return accumulate(0, [&](std::size_t i, std::span<double> out) {
    const std::span<const double> y(&x_[i * n], n);
    for (int m = 0; m < sectors_; ++m) {
      const Point z = rotate(y, m);
      const double v = f(z.coords()) * w_[i];
      out[piece_[i]] += v;
      out[ball_[i] ? (m == 0 ? 4 : 5) : 6] += v;
    }
  });
}

RegionBreakdown QuadratureScheme::integrate_product(const Integrand& invariant, const Integrand& other) const {
  const auto n = static_cast<std::size_t>(N_);
  return accumulate(0, [&](std::size_t i, std::span<double> out) {
    const std::span<const double> y(&x_[i * n], n);
    const double a = invariant(y) * w_[i];
    if (a == 0.0) return;
    for (int m = 0; m < sectors_; ++m) {
      const Point z = rotate(y, m);
      const double v = a * other(z.coords());
      out[piece_[i]] += v;
      out[ball_[i] ? (m == 0 ? 4 : 5) : 6] += v;
    }
  });
}

NormResult norm_starstar(const Integrand& h, const ProblemParams& params, const QuadratureScheme& scheme, Symmetry sym) {
  const double q = params.q();
  const double beta = params.N() + 2.0 * params.s() - 2.0 * params.N() / q;
  const PowerFn wpow(beta);
  const PowerFn qpow(q);
  const Integrand f = [&](std::span<const double> y) { return qpow(std::abs(wpow(1.0 + std::sqrt(norm2(y))) * h(y))); };
  const RegionBreakdown coarse = scheme.integrate(f, sym);
  const RegionBreakdown fine = scheme.refined().integrate(f, sym);
  NormResult out;
  out.region_breakdown = fine;
  const double i1 = std::max(fine.total(), 0.0);
  const double i0 = std::max(coarse.total(), 0.0);
  out.value = std::pow(i1, 1.0 / q);
  const double v0 = std::pow(i0, 1.0 / q);
  out.est_rel_error = out.value > 0.0 ? std::abs(out.value - v0) / out.value : 0.0;
  out.converged = out.est_rel_error <= scheme.options().tol;
  return out;
}

NormResult integrate_checked(const Integrand& f, const QuadratureScheme& scheme, Symmetry sym) {
  const RegionBreakdown coarse = scheme.integrate(f, sym);
  const RegionBreakdown fine = scheme.refined().integrate(f, sym);
  NormResult out;
  out.region_breakdown = fine;
  out.value = fine.total();
  out.est_rel_error = std::abs(fine.total() - coarse.total()) / std::max(std::abs(fine.total()), 1e-300);
  out.converged = out.est_rel_error <= scheme.options().tol;
  return out;
}

NormResult project_kernel(const Integrand& h, int l, const BubbleFamily& fam, const QuadratureScheme& scheme,
                          Symmetry sym) {
  if (l < 1 || l > fam.params().N() + 1) throw std::out_of_range("kernel index must lie in [1, N+1]");
  const Integrand v = [&fam, l](std::span<const double> y) { return fam.kernel(l, y); };
  if (sym == Symmetry::Rotation && l <= 2 && scheme.sectors() > 1) {
    const RegionBreakdown coarse = scheme.integrate_product(h, v);
    const RegionBreakdown fine = scheme.refined().integrate_product(h, v);
    NormResult out;
    out.region_breakdown = fine;
    out.value = fine.total();
    out.est_rel_error = std::abs(fine.total() - coarse.total()) / std::max(std::abs(fine.total()), 1e-300);
    out.converged = true;
    return out;
  }
  const Integrand f = [&](std::span<const double> y) { return h(y) * v(y); };
  NormResult out = integrate_checked(f, scheme, sym);
  out.converged = true;
  return out;
}

StarResult norm_star(const Integrand& phi, const ProblemParams& params, std::span<const Point> centers, int budget) {
  const int N = params.N();
  const PowerFn wpow(params.alpha());
  StarResult best;
  best.argmax = Point(N);
  auto score = [&](const Point& y) { return wpow(1.0 + y.norm()) * std::abs(phi(y.coords())); };

  struct Ray {
    Point base;
    Point dir;
    double r;
    double v;
  };
  std::vector<Ray> rays;
  const SphereRule S = sphere_rule(N - 1, 4);
  std::vector<Point> dirs;
  for (int i = 0; i < N; ++i) {
    dirs.push_back(Point::axis(N, i, 1.0));
    dirs.push_back(Point::axis(N, i, -1.0));
  }
  for (std::size_t a = 0; a < S.size(); ++a)
    dirs.emplace_back(std::span<const double>(&S.x[a * static_cast<std::size_t>(N)], static_cast<std::size_t>(N)));

  auto consider = [&](const Point& base, const Point& dir, double r) {
    const Point y = base + r * dir;
    const double v = score(y);
    ++best.candidates;
    rays.push_back({base, dir, r, v});
    if (v > best.value) {
      best.value = v;
      best.argmax = y;
    }
  };

  const Point origin(N);
  consider(origin, dirs[0], 0.0);
  for (const auto& c : centers) consider(c, dirs[0], 0.0);
  const int per_ray = std::max(8, budget / static_cast<int>(dirs.size() * (1 + centers.size())));
  for (const auto& d : dirs)
    for (int i = 0; i < per_ray; ++i) consider(origin, d, std::pow(10.0, -3.0 + 11.0 * i / (per_ray - 1)));
  for (const auto& c : centers)
    for (const auto& d : dirs)
      for (int i = 0; i < per_ray; ++i) consider(c, d, std::pow(10.0, -8.0 + 8.0 * i / (per_ray - 1)));

  std::sort(rays.begin(), rays.end(), [](const Ray& a, const Ray& b) { return a.v > b.v; });
  const std::size_t polish = std::min<std::size_t>(rays.size(), 16);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  for (std::size_t i = 0; i < polish; ++i) {
    const Ray& ray = rays[i];
    if (ray.r == 0.0) continue;
    double a = std::log(ray.r) - 0.3, b = std::log(ray.r) + 0.3;
    auto f = [&](double t) { return score(ray.base + std::exp(t) * ray.dir); };
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 80; ++it) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - gr * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + gr * (b - a);
        fd = f(d);
      }
    }
    const double t = 0.5 * (a + b);
    const Point y = ray.base + std::exp(t) * ray.dir;
    const double v = score(y);
    best.candidates += 82;
    if (v > best.value) {
      best.value = v;
      best.argmax = y;
    }
  }
  return best;
}

}  // namespace fracbubbles
