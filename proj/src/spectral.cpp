#include "fracbubbles/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

#include "fracbubbles/parallel.hpp"

namespace fracbubbles {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double freq(int j, int n, double L) { return std::numbers::pi / L * (j <= n / 2 ? j : j - n); }

void decode(std::size_t idx, int N, int n, int* digits) {
  for (int d = N - 1; d >= 0; --d) {
    digits[d] = static_cast<int>(idx % static_cast<std::size_t>(n));
    idx /= static_cast<std::size_t>(n);
  }
}

std::size_t encode(const int* digits, int N, int n) {
  std::size_t idx = 0;
  for (int d = 0; d < N; ++d) idx = idx * static_cast<std::size_t>(n) + static_cast<std::size_t>(digits[d]);
  return idx;
}

// Four-point Lagrange weights at offset t in [0, 1) from node 0 of nodes -1, 0, 1, 2.
void cubic_weights(double t, double* w) {
  w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0;
  w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
  w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0;
  w[3] = (t + 1.0) * t * (t - 1.0) / 6.0;
}

}  // namespace

std::size_t GridSpec::size() const {
  std::size_t s = 1;
  for (int d = 0; d < N; ++d) s *= static_cast<std::size_t>(n);
  return s;
}

void GridSpec::validate() const {
  if (N < 1 || N > kMaxDim) throw ConfigError("grid dimension out of range");
  if (n < 16 || !std::has_single_bit(static_cast<unsigned>(n))) throw ConfigError("grid n must be a power of two >= 16");
  if (!(L >= 4.0)) throw ConfigError("grid L must be at least 4");
  if (!(window > 0.0 && window < L)) throw ConfigError("grid window must lie in (0, L)");
}

nlohmann::json GridSpec::to_json() const { return {{"N", N}, {"n", n}, {"L", L}, {"window", window}}; }

double taper(const GridSpec& g, double r) { return cutoff_profile(0.5 + 0.5 * std::max(r - (g.L - g.window), 0.0) / g.window); }

GridField::GridField(const GridSpec& spec) : spec_(spec), v_(spec.size(), 0.0) {}

GridField::GridField(const GridSpec& spec, std::vector<double> data) : spec_(spec), v_(std::move(data)) {
  if (v_.size() != spec_.size()) throw std::invalid_argument("grid data size mismatch");
}

GridField GridField::sample(const GridSpec& spec, const Integrand& f, bool tapered) {
  GridField out(spec);
  parallel_chunks(out.size(), 4096, [&](std::size_t b, std::size_t e) {
    Point y(spec.N);
    for (std::size_t i = b; i < e; ++i) {
      out.point(i, y.coords());
      double v = f(y.coords());
      if (tapered) v *= taper(spec, y.norm());
      out.v_[i] = v;
    }
  });
  return out;
}

void GridField::point(std::size_t i, std::span<double> y) const {
  int digits[kMaxDim];
  decode(i, spec_.N, spec_.n, digits);
  for (int d = 0; d < spec_.N; ++d) y[static_cast<std::size_t>(d)] = spec_.coord(digits[d]);
}

double GridField::interpolate(std::span<const double> y) const {
  const int N = spec_.N, n = spec_.n;
  const double h = spec_.h();
  int base[kMaxDim];
  double w[kMaxDim][4];
  for (int d = 0; d < N; ++d) {
    const double u = (y[static_cast<std::size_t>(d)] + spec_.L) / h - 0.5;
    if (!(u >= -0.5 && u <= n - 0.5)) return 0.0;
    const double fl = std::floor(u);
    base[d] = static_cast<int>(fl) - 1;
    cubic_weights(u - fl, w[d]);
  }
  double acc = 0.0;
  int total = 1;
  for (int d = 0; d < N; ++d) total *= 4;
  int digits[kMaxDim];
  for (int c = 0; c < total; ++c) {
    int rem = c;
    double wt = 1.0;
    for (int d = N - 1; d >= 0; --d) {
      const int o = rem % 4;
      rem /= 4;
      wt *= w[d][o];
      digits[d] = ((base[d] + o) % n + n) % n;
    }
    acc += wt * v_[encode(digits, N, n)];
  }
  return acc;
}

double GridField::l2() const {
  const double hN = std::pow(spec_.h(), spec_.N);
  return std::sqrt(hN * dot(v_, v_));
}

double GridField::max_abs() const {
  double m = 0.0;
  for (double v : v_) m = std::max(m, std::abs(v));
  return m;
}

namespace {
bool interior(const GridSpec& g, std::size_t i) {
  int digits[kMaxDim];
  decode(i, g.N, g.n, digits);
  for (int d = 0; d < g.N; ++d)
    if (std::abs(g.coord(digits[d])) > 0.5 * g.L) return false;
  return true;
}
}  // namespace

double GridField::interior_max_abs() const {
  double m = 0.0;
  for (std::size_t i = 0; i < v_.size(); ++i)
    if (interior(spec_, i)) m = std::max(m, std::abs(v_[i]));
  return m;
}

GridField& GridField::operator+=(const GridField& o) {
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
  return *this;
}
GridField& GridField::operator-=(const GridField& o) {
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
  return *this;
}
GridField& GridField::operator*=(double t) {
  for (double& v : v_) v *= t;
  return *this;
}

double interior_max_diff(const GridField& a, const GridField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (interior(a.spec(), i)) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct FracLaplacian::Impl {
  std::size_t nreal = 0;
  std::size_t ncomplex = 0;
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  std::vector<double> symbol;

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
    if (real) fftw_free(real);
    if (cplx) fftw_free(cplx);
  }

  void forward(std::span<const double> in) {
    std::copy(in.begin(), in.end(), real);
    fftw_execute(fwd);
  }
  void backward(std::span<double> out) {
    fftw_execute(bwd);
    const double inv = 1.0 / static_cast<double>(nreal);
    for (std::size_t i = 0; i < nreal; ++i) out[i] = real[i] * inv;
  }
};

FracLaplacian::FracLaplacian(const GridSpec& spec, double s) : spec_(spec), s_(s), impl_(std::make_unique<Impl>()) {
  spec_.validate();
  const int N = spec_.N, n = spec_.n;
  impl_->nreal = spec_.size();
  impl_->ncomplex = impl_->nreal / static_cast<std::size_t>(n) * static_cast<std::size_t>(n / 2 + 1);
  std::vector<int> dims(static_cast<std::size_t>(N), n);
  {
    std::lock_guard lock(planner_mutex());
    impl_->real = fftw_alloc_real(impl_->nreal);
    impl_->cplx = fftw_alloc_complex(impl_->ncomplex);
    impl_->fwd = fftw_plan_dft_r2c(N, dims.data(), impl_->real, impl_->cplx, FFTW_ESTIMATE);
    impl_->bwd = fftw_plan_dft_c2r(N, dims.data(), impl_->cplx, impl_->real, FFTW_ESTIMATE);
  }
  impl_->symbol.resize(impl_->ncomplex);
  const int nl = n / 2 + 1;
  for (std::size_t c = 0; c < impl_->ncomplex; ++c) {
    std::size_t rem = c;
    const int jl = static_cast<int>(rem % static_cast<std::size_t>(nl));
    rem /= static_cast<std::size_t>(nl);
    double k2 = std::pow(std::numbers::pi / spec_.L * jl, 2);
    for (int d = N - 2; d >= 0; --d) {
      const int j = static_cast<int>(rem % static_cast<std::size_t>(n));
      rem /= static_cast<std::size_t>(n);
      k2 += std::pow(freq(j, n, spec_.L), 2);
    }
    impl_->symbol[c] = std::pow(k2, s);
  }
}

FracLaplacian::~FracLaplacian() = default;

void FracLaplacian::apply(std::span<const double> in, std::span<double> out) {
  impl_->forward(in);
  for (std::size_t c = 0; c < impl_->ncomplex; ++c) {
    impl_->cplx[c][0] *= impl_->symbol[c];
    impl_->cplx[c][1] *= impl_->symbol[c];
  }
  impl_->backward(out);
}

void FracLaplacian::apply_shifted_inverse(std::span<const double> in, std::span<double> out, double sigma) {
  impl_->forward(in);
  for (std::size_t c = 0; c < impl_->ncomplex; ++c) {
    const double m = 1.0 / (impl_->symbol[c] + sigma);
    impl_->cplx[c][0] *= m;
    impl_->cplx[c][1] *= m;
  }
  impl_->backward(out);
}

double FracLaplacian::energy(std::span<const double> f) {
  std::vector<double> Df(f.size());
  apply(f, Df);
  return std::pow(spec_.h(), spec_.N) * dot(f, Df);
}

std::vector<double> FracLaplacian::axis_values(std::span<const double> f, std::span<const double> x) {
  const int N = spec_.N, n = spec_.n, nl = n / 2 + 1;
  impl_->forward(f);
  const double shift = spec_.L - 0.5 * spec_.h();  // 0 - coord(0)
  std::vector<std::complex<double>> G(static_cast<std::size_t>(n));
  for (std::size_t c = 0; c < impl_->ncomplex; ++c) {
    std::size_t rem = c;
    const int jl = static_cast<int>(rem % static_cast<std::size_t>(nl));
    rem /= static_cast<std::size_t>(nl);
    double phase = std::numbers::pi / spec_.L * jl * shift;
    int j0 = 0;
    for (int d = N - 2; d >= 0; --d) {
      const int j = static_cast<int>(rem % static_cast<std::size_t>(n));
      rem /= static_cast<std::size_t>(n);
      if (d == 0)
        j0 = j;
      else
        phase += freq(j, n, spec_.L) * shift;
    }
    if (N == 1) {
      j0 = jl;
      phase = 0.0;
    }
    const double wl = (N == 1 || jl == 0 || jl == n / 2) ? 1.0 : 2.0;
    const std::complex<double> v(impl_->cplx[c][0], impl_->cplx[c][1]);
    G[static_cast<std::size_t>(j0)] += wl * impl_->symbol[c] * v * std::polar(1.0, phase);
  }
  std::vector<double> out(x.size());
  const double x0 = spec_.coord(0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::complex<double> acc = 0.0;
    for (int j = 0; j < n; ++j) acc += G[static_cast<std::size_t>(j)] * std::polar(1.0, freq(j, n, spec_.L) * (x[i] - x0));
    out[i] = acc.real() / static_cast<double>(impl_->nreal);
  }
  return out;
}

GridField frac_laplacian(const GridField& f, double s) {
  FracLaplacian D(f.spec(), s);
  GridField out(f.spec());
  D.apply(f.data(), out.data());
  return out;
}

GridField apply_L0(const GridField& phi, const BubbleFamily& fam) {
  GridField out = frac_laplacian(phi, fam.params().s());
  const GridField U = GridField::sample(phi.spec(), [&fam](std::span<const double> y) { return fam.U_r2(norm2(y)); });
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= fam.p() * fam.pow_pm1(U[i]) * phi[i];
  return out;
}

Calibration calibrate_amplitude(const ProblemParams& params, const GridSpec& grid, double core_radius) {
  GridSpec g = grid;
  g.N = params.N();
  const BubbleFamily unit(params, Amplitude{1.0});
  const GridField U = GridField::sample(g, [&unit](std::span<const double> y) { return unit.U_r2(norm2(y)); }, true);
  const GridField DU = frac_laplacian(U, params.s());
  CompensatedSum num, den;
  Point y(g.N);
  for (std::size_t i = 0; i < U.size(); ++i) {
    U.point(i, y.coords());
    if (y.norm() > core_radius) continue;
    const double up = unit.pow_p(U[i]);
    num.add(DU[i] * up);
    den.add(up * up);
  }
  const double cpm1 = num.value() / den.value();
  Calibration out;
  out.amplitude.c = std::pow(cpm1, 1.0 / (params.p() - 1.0));
  out.closed_form_c = Amplitude::closed_form(params).c;
  const double c = out.amplitude.c;
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < U.size(); ++i) {
    if (!interior(g, i)) continue;
    const double rhs = std::pow(c, params.p()) * unit.pow_p(U[i]);
    err = std::max(err, std::abs(c * DU[i] - rhs));
    ref = std::max(ref, rhs);
  }
  out.rel_sup_error = err / ref;
  return out;
}

RadialProfile::RadialProfile(const BubbleFamily& fam, const GridSpec& grid, int table)
    : exponent_(-(fam.params().N() + 2.0 * fam.params().s())) {
  GridSpec g = grid;
  g.N = fam.params().N();
  const GridField U = GridField::sample(g, [&fam](std::span<const double> y) { return fam.U_r2(norm2(y)); }, true);
  FracLaplacian D(g, fam.params().s());
  std::vector<double> r(static_cast<std::size_t>(table));
  for (int i = 0; i < table; ++i) r[static_cast<std::size_t>(i)] = static_cast<double>(i) / (table - 1);
  table_ = D.axis_values(U.data(), r);
}

double RadialProfile::operator()(double r) const {
  if (r > 1.0) return std::pow(r, exponent_) * (*this)(1.0 / r);
  const int m = static_cast<int>(table_.size()) - 1;
  const double u = r * m;
  int i = std::clamp(static_cast<int>(std::floor(u)), 1, m - 2);
  double w[4];
  cubic_weights(u - i, w);
  double acc = 0.0;
  for (int o = 0; o < 4; ++o) {
    // Even reflection through r = 0 for the first stencil.
    const int j = std::abs(i - 1 + o);
    acc += w[o] * table_[static_cast<std::size_t>(j)];
  }
  return acc;
}

ResidualOracle residual_oracle(const Ansatz& a, const GridSpec& grid) {
  const BubbleFamily& fam = a.family();
  const BubbleConfig& cfg = a.config();
  GridSpec g = grid;
  g.N = fam.params().N();
  const RadialProfile prof(fam, g);
  const double alpha = fam.params().alpha();
  const double mu = cfg.mu();
  const double scale = cfg.k() > 0 ? std::pow(mu, -0.5 * (fam.params().N() + 2.0 * fam.params().s())) : 0.0;

  auto spectral_E = [&](std::span<const double> y, double ustar) {
    double v = prof(std::sqrt(norm2(y)));
    for (const auto& c : cfg.centers()) v -= scale * prof(std::sqrt(distance2(y, c.coords())) / mu);
    return v - fam.signed_pow_p(ustar);
  };
  (void)alpha;

  const GridField probe(g);
  const std::size_t total = g.size();
  std::vector<double> diff(total, 0.0), mag(total, 0.0);
  parallel_chunks(total, 4096, [&](std::size_t b, std::size_t e) {
    Point y(g.N);
    for (std::size_t i = b; i < e; ++i) {
      if (!interior(g, i)) continue;
      probe.point(i, y.coords());
      const auto smp = a.sample(y.coords());
      mag[i] = std::abs(smp.E);
      diff[i] = std::abs(spectral_E(y.coords(), smp.U_star) - smp.E);
    }
  });
  ResidualOracle out;
  out.max_abs_E = *std::max_element(mag.begin(), mag.end());
  const double dmax = *std::max_element(diff.begin(), diff.end());
  const Point origin(g.N);
  const auto s0 = a.sample(origin.coords());
  out.origin_closed = s0.E;
  out.origin_spectral = spectral_E(origin.coords(), s0.U_star);
  if (out.max_abs_E > 0.0) {
    out.rel_sup_error = dmax / out.max_abs_E;
    out.origin_rel_error = std::abs(out.origin_closed - out.origin_spectral) / out.max_abs_E;
  } else {
    out.rel_sup_error = dmax;
    out.origin_rel_error = std::abs(out.origin_closed - out.origin_spectral);
  }
  return out;
}

KernelSet kernel_set(const BubbleFamily& fam, const GridSpec& grid, std::vector<int> ls) {
  KernelSet K;
  K.l = std::move(ls);
  const GridField U = GridField::sample(grid, [&fam](std::span<const double> y) { return fam.U_r2(norm2(y)); });
  for (int l : K.l) {
    GridField v = GridField::sample(grid, [&fam, l](std::span<const double> y) { return fam.kernel(l, y); }, true);
    GridField Wv = v;
    for (std::size_t i = 0; i < v.size(); ++i) Wv[i] = fam.pow_pm1(U[i]) * v[i];
    K.v.push_back(std::move(v));
    K.Wv.push_back(std::move(Wv));
  }
  const std::size_t m = K.l.size();
  K.gram.assign(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) K.gram[i * m + j] = dot(K.Wv[i].data(), K.v[j].data());
  return K;
}

namespace {

// h - sum c_l Wv_l with <result, v_m> = 0.
std::vector<double> project_range(std::span<double> h, const KernelSet& K) {
  const std::size_t m = K.l.size();
  std::vector<double> b(m);
  for (std::size_t i = 0; i < m; ++i) b[i] = dot(h, K.v[i].data());
  std::vector<double> At(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) At[i * m + j] = K.gram[j * m + i];
  if (!dense_solve(At, b, static_cast<int>(m))) throw std::runtime_error("kernel Gram matrix is singular");
  for (std::size_t l = 0; l < m; ++l)
    for (std::size_t i = 0; i < h.size(); ++i) h[i] -= b[l] * K.Wv[l][i];
  return b;
}

// phi - sum d_l v_l with <Wv_m, result> = 0.
void project_domain(std::span<double> phi, const KernelSet& K) {
  const std::size_t m = K.l.size();
  std::vector<double> b(m);
  for (std::size_t i = 0; i < m; ++i) b[i] = dot(phi, K.Wv[i].data());
  if (!dense_solve(K.gram, b, static_cast<int>(m))) throw std::runtime_error("kernel Gram matrix is singular");
  for (std::size_t l = 0; l < m; ++l)
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] -= b[l] * K.v[l][i];
}

}  // namespace

ProjectedSolve projected_solve(const GridField& h, const GridField& W, const KernelSet& K, FracLaplacian& D,
                               SolveOptions opt) {
  const std::size_t n = h.size();
  ProjectedSolve out;
  const double hn = norm2_of(h.data());
  for (std::size_t i = 0; i < K.l.size(); ++i) {
    const double vn = norm2_of(K.v[i].data());
    if (hn > 0.0 && vn > 0.0)
      out.pre_violation = std::max(out.pre_violation, std::abs(dot(h.data(), K.v[i].data())) / (hn * vn));
  }
  std::vector<double> b(h.data().begin(), h.data().end());
  out.coeffs = K.l.empty() ? std::vector<double>{} : project_range(b, K);

  std::vector<double> tmp(n);
  const LinearMap A = [&](std::span<const double> x, std::span<double> y) {
    std::copy(x.begin(), x.end(), tmp.begin());
    if (!K.l.empty()) project_domain(tmp, K);
    D.apply(tmp, y);
    for (std::size_t i = 0; i < n; ++i) y[i] -= W[i] * tmp[i];
    if (!K.l.empty()) project_range(y, K);
  };
  const LinearMap M = [&](std::span<const double> x, std::span<double> y) {
    D.apply_shifted_inverse(x, y, opt.sigma);
  };
  out.phi = GridField(h.spec());
  out.gmres = gmres(A, M, b, out.phi.data(), opt.tol, opt.restart, opt.max_iter);
  if (!K.l.empty()) project_domain(out.phi.data(), K);
  return out;
}

ProjectedSolve projected_solve(const GridField& h, const BubbleFamily& fam, SolveOptions opt) {
  const GridSpec& g = h.spec();
  std::vector<int> ls;
  for (int l = 1; l <= fam.params().N() + 1; ++l) ls.push_back(l);
  const KernelSet K = kernel_set(fam, g, ls);
  const GridField W =
      GridField::sample(g, [&fam](std::span<const double> y) { return fam.p() * fam.pow_pm1(fam.U_r2(norm2(y))); });
  FracLaplacian D(g, fam.params().s());
  return projected_solve(h, W, K, D, opt);
}

GridSymmetry::GridSymmetry(const GridSpec& spec, int k) : spec_(spec) {
  if (spec.N < 2) throw ConfigError("grid symmetry needs N >= 2");
  if (k == 0 || k % 4 == 0) {
    for (int g = 0; g < 8; ++g) planar_.push_back(g);
  } else if (k % 2 == 0) {
    planar_ = {0, 2, 4, 6};
  } else {
    planar_ = {0, 4};
  }
}

std::size_t GridSymmetry::image(std::size_t idx, int planar, int mask) const {
  const int N = spec_.N, n = spec_.n;
  int d[kMaxDim];
  decode(idx, N, n, d);
  if (planar & 1) std::swap(d[0], d[1]);
  if (planar & 2) d[0] = n - 1 - d[0];
  if (planar & 4) d[1] = n - 1 - d[1];
  for (int i = 2; i < N; ++i)
    if (mask & (1 << (i - 2))) d[i] = n - 1 - d[i];
  return encode(d, N, n);
}

void GridSymmetry::symmetrize(std::span<double> f) const {
  const std::vector<double> src(f.begin(), f.end());
  const int masks = 1 << (spec_.N - 2);
  const double inv = 1.0 / order();
  parallel_chunks(f.size(), 8192, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double acc = 0.0;
      for (int p : planar_)
        for (int m = 0; m < masks; ++m) acc += src[image(i, p, m)];
      f[i] = acc * inv;
    }
  });
}

double GridSymmetry::defect(std::span<const double> f) const {
  const int masks = 1 << (spec_.N - 2);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    for (int p : planar_)
      for (int m = 0; m < masks; ++m) worst = std::max(worst, std::abs(f[image(i, p, m)] - f[i]));
  return worst;
}


namespace {

struct NodeData {
  std::vector<double> U, Ustar, E;
};

NodeData sample_nodes(const Ansatz& a, const GridSpec& g) {
  NodeData d;
  const std::size_t n = g.size();
  d.U.resize(n);
  d.Ustar.resize(n);
  d.E.resize(n);
  const GridField probe(g);
  parallel_chunks(n, 4096, [&](std::size_t b, std::size_t e) {
    Point y(g.N);
    for (std::size_t i = b; i < e; ++i) {
      probe.point(i, y.coords());
      const auto smp = a.sample(y.coords());
      d.U[i] = smp.U;
      d.Ustar[i] = smp.U_star;
      d.E[i] = smp.E;
    }
  });
  return d;
}

// D phi + E - [f(U* + phi) - f(U*)] at the nodes.
void equation_residual(const BubbleFamily& fam, const NodeData& d, FracLaplacian& D, std::span<const double> phi,
                       std::span<double> out) {
  D.apply(phi, out);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] += d.E[i] - (fam.signed_pow_p(d.Ustar[i] + phi[i]) - fam.signed_pow_p(d.Ustar[i]));
}

double grid_l2(const GridSpec& g, std::span<const double> v) { return std::sqrt(std::pow(g.h(), g.N) * dot(v, v)); }

// Damped Newton on D phi + t E - [f(U* + phi) - f(U*)] = 0, continued from
// t = 0 (phi = 0) to t = 1. The history records the t = 1 residual.
void refine_direct(const Ansatz& a, const GridSpec& g, const RefineOptions& opt, RefineResult& res) {
  const BubbleFamily& fam = a.family();
  NodeData d = sample_nodes(a, g);
  FracLaplacian D(g, fam.params().s());
  const GridSymmetry sym(g, a.config().k());
  const std::size_t n = g.size();
  sym.symmetrize(d.E);
  const std::vector<double> E = d.E;

  std::vector<double> phi(n, 0.0), F(n), trial(n), Ftrial(n), step(n), pot(n), rhs(n);
  double t = 1.0;
  auto residual = [&](std::span<const double> x, std::vector<double>& out) {
    for (std::size_t i = 0; i < n; ++i) d.E[i] = t * E[i];
    equation_residual(fam, d, D, x, out);
    sym.symmetrize(out);
    return grid_l2(g, out);
  };
  auto full_norm = [&](const std::vector<double>& Ft) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::pow(Ft[i] + (1.0 - t) * E[i], 2);
    return std::sqrt(std::pow(g.h(), g.N) * acc);
  };
  const LinearMap J = [&](std::span<const double> x, std::span<double> y) {
    D.apply(x, y);
    for (std::size_t i = 0; i < n; ++i) y[i] -= pot[i] * x[i];
  };
  const LinearMap M = [&](std::span<const double> x, std::span<double> y) {
    D.apply_shifted_inverse(x, y, opt.sigma);
  };

  res.ansatz_residual = residual(phi, F);
  res.history.push_back({0, res.ansatz_residual, 1.0, 0});
  int iter = 0;

  // Newton at the current t from phi; false when the stage stalls.
  auto solve_stage = [&](double target, int budget) {
    double current = residual(phi, F);
    int increases = 0;
    for (int s = 0; s < budget && current > target; ++s) {
      if (iter >= opt.max_iter) return false;
      for (std::size_t i = 0; i < n; ++i) pot[i] = fam.p() * fam.pow_pm1(std::abs(d.Ustar[i] + phi[i]));
      for (std::size_t i = 0; i < n; ++i) rhs[i] = -F[i];
      std::fill(step.begin(), step.end(), 0.0);
      const auto gm = gmres(J, M, rhs, step, opt.gmres_tol, 40, 400);
      if (!gm.converged) res.warnings.push_back("linear solve stalled at iteration " + std::to_string(iter + 1));
      sym.symmetrize(step);
      double lambda = 1.0, next = 0.0;
      for (;;) {
        for (std::size_t i = 0; i < n; ++i) trial[i] = phi[i] + lambda * step[i];
        next = residual(trial, Ftrial);
        if (next < current || lambda <= 1.0 / 256.0) break;
        lambda *= 0.5;
      }
      phi.swap(trial);
      F.swap(Ftrial);
      increases = next >= current ? increases + 1 : 0;
      current = next;
      res.history.push_back({++iter, full_norm(F), lambda, gm.iterations});
      if (!std::isfinite(current) || increases >= 3) return false;
    }
    return current <= target;
  };

  const int stages = std::max(opt.continuation_steps, 1);
  double t_done = 0.0, dt = 1.0 / stages;
  std::vector<double> saved;
  while (t_done < 1.0) {
    t = std::min(1.0, t_done + dt);
    const bool last = t >= 1.0;
    saved = phi;
    const double target = (last ? opt.tol : opt.stage_tol) * res.ansatz_residual;
    if (solve_stage(target, last ? opt.max_iter : opt.stage_iter)) {
      t_done = t;
      continue;
    }
    if (iter >= opt.max_iter) break;
    phi = saved;
    dt *= 0.5;
    if (dt < 1.0 / 256.0) {
      res.diverged = true;
      res.warnings.push_back("continuation step fell below 1/256 at t = " + std::to_string(t_done));
      break;
    }
  }
  t = 1.0;
  res.final_residual = residual(phi, F);
  if (t_done < 1.0) res.history.push_back({iter, res.final_residual, 1.0, 0});
  res.converged = t_done >= 1.0 && res.final_residual <= opt.tol * res.ansatz_residual;
  res.phi = GridField(g, std::move(phi));
}

// Rescaled first-bubble correction extended to the whole space.
class LocalCorrection {
 public:
  LocalCorrection(const GridField& phi1, const BubbleConfig& cfg, double alpha)
      : phi1_(phi1), cfg_(cfg), alpha_(alpha), amp_(std::pow(cfg.mu(), -0.5 * alpha)),
        rb_(0.5 * phi1.spec().L) {}

  double bubble(std::span<const double> y, int j) const {
    const int N = cfg_.dim();
    const double th = -2.0 * std::numbers::pi * (j - 1) / cfg_.k();
    Point z(N);
    const double c = std::cos(th), s = std::sin(th);
    z[0] = c * y[0] - s * y[1];
    z[1] = s * y[0] + c * y[1];
    for (int d = 2; d < N; ++d) z[d] = y[static_cast<std::size_t>(d)];
    const Point& xi = cfg_.center(1);
    for (int d = 0; d < N; ++d) z[d] = (z[d] - xi[d]) / cfg_.mu();
    const double r = z.norm();
    if (r <= rb_) return amp_ * phi1_.interpolate(z.coords());
    const double t = rb_ / r;
    for (int d = 0; d < N; ++d) z[d] *= t;
    return amp_ * phi1_.interpolate(z.coords()) * std::pow(t, alpha_);
  }

  // (sum phi_j, sum zeta_j phi_j)
  std::pair<double, double> sums(std::span<const double> y) const {
    double a = 0.0, b = 0.0;
    for (int j = 1; j <= cfg_.k(); ++j) {
      const double v = bubble(y, j);
      a += v;
      b += cutoff(cfg_, j, y) * v;
    }
    return {a, b};
  }

 private:
  const GridField& phi1_;
  const BubbleConfig& cfg_;
  double alpha_;
  double amp_;
  double rb_;
};

void refine_gluing(const Ansatz& a, const GridSpec& g, const RefineOptions& opt, RefineResult& res) {
  const BubbleFamily& fam = a.family();
  const BubbleConfig& cfg = a.config();
  if (cfg.k() == 0) throw ConfigError("gluing mode needs k >= 1");
  const int N = g.N;
  const double p = fam.p();
  const double mu = cfg.mu();
  const double alpha = fam.params().alpha();
  const double src_scale = std::pow(mu, 0.5 * (N + 2.0 * fam.params().s()));
  const std::size_t n = g.size();

  const NodeData d = sample_nodes(a, g);
  std::vector<double> zs(n), V(n);
  {
    const GridField probe(g);
    Point y(N);
    for (std::size_t i = 0; i < n; ++i) {
      probe.point(i, y.coords());
      zs[i] = cutoff_sum(cfg, y.coords());
      const double us = fam.pow_pm1(std::abs(d.Ustar[i])), u = fam.pow_pm1(d.U[i]);
      V[i] = -p * (us - u) * (1.0 - zs[i]) + p * u * zs[i];
    }
  }
  std::vector<int> ls;
  for (int l = 1; l <= N + 1; ++l) ls.push_back(l);
  const KernelSet K = kernel_set(fam, g, ls);
  const GridField Wg = GridField::sample(g, [&fam](std::span<const double> y) { return fam.p() * fam.pow_pm1(fam.U_r2(norm2(y))); });
  FracLaplacian D(g, fam.params().s());

  GridSpec lg;
  lg.N = N;
  lg.n = opt.local_n;
  lg.L = opt.local_L;
  lg.window = 0.5 * opt.local_L;
  lg.validate();
  const std::size_t nl = lg.size();
  std::vector<Point> ylocal(nl, Point(N));
  std::vector<double> Wl(nl), z1(nl);
  {
    const GridField probe(lg);
    const Point& xi = cfg.center(1);
    for (std::size_t i = 0; i < nl; ++i) {
      probe.point(i, ylocal[i].coords());
      for (int c = 0; c < N; ++c) ylocal[i][c] = xi[c] + mu * ylocal[i][c];
      z1[i] = cutoff(cfg, 1, ylocal[i].coords());
      Wl[i] = p * z1[i] * fam.pow_pm1(std::pow(mu, 0.5 * alpha) * std::abs(a.U_star(ylocal[i].coords())));
    }
  }
  const KernelSet Kl = kernel_set(fam, lg, ls);
  FracLaplacian Dl(lg, fam.params().s());
  const GridField Wlf(lg, Wl);

  GridField psi(g), phi1(lg);
  const LocalCorrection corr(phi1, cfg, alpha);
  std::vector<double> phisum(n), zphisum(n), F(n), total(n);
  const GridField probe(g);
  SolveOptions so{opt.gmres_tol, opt.sigma, 40, 600};

  auto update_sums = [&] {
    parallel_chunks(n, 2048, [&](std::size_t b, std::size_t e) {
      Point y(N);
      for (std::size_t i = b; i < e; ++i) {
        probe.point(i, y.coords());
        std::tie(phisum[i], zphisum[i]) = corr.sums(y.coords());
      }
    });
  };
  auto global_residual = [&] {
    for (std::size_t i = 0; i < n; ++i) total[i] = phisum[i] + psi[i];
    equation_residual(fam, d, D, total, F);
    return grid_l2(g, F);
  };

  update_sums();
  res.ansatz_residual = global_residual();
  double current = res.ansatz_residual;
  res.history.push_back({0, current, 1.0, 0});
  int increases = 0;
  std::vector<double> h(n);

  for (int it = 1; it <= opt.max_iter; ++it) {
    double prev_diff = 0.0;
    for (int inner = 0; inner < opt.inner_iter; ++inner) {
      for (std::size_t i = 0; i < n; ++i) {
        const double M1 = -p * fam.pow_pm1(std::abs(d.Ustar[i])) * (phisum[i] - zphisum[i]);
        const double M2 = (1.0 - zs[i]) * d.E[i];
        const double M3 = -(1.0 - zs[i]) * nonlinear_remainder_value(fam, d.Ustar[i], phisum[i] + psi[i]);
        h[i] = -(V[i] * psi[i] + M1 + M2 + M3);
      }
      auto sol = projected_solve(GridField(g, h), Wg, K, D, so);
      double diff2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) diff2 += std::pow(sol.phi[i] - psi[i], 2);
      const double diff = std::sqrt(diff2);
      if (prev_diff > 0.0) res.contraction.push_back(diff / prev_diff);
      prev_diff = diff;
      psi = std::move(sol.phi);
      if (diff <= opt.inner_tol * std::max(norm2_of(psi.data()), 1e-300)) break;
    }

    std::vector<double> hl(nl);
    std::vector<double> pieces(5, 0.0);
    parallel_chunks(nl, 256, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        if (z1[i] == 0.0) {
          hl[i] = 0.0;
          continue;
        }
        const auto y = ylocal[i].coords();
        const auto smp = a.sample(y);
        const double ps = psi.interpolate(y);
        const double ph = corr.sums(y).first;
        const double src = -p * fam.pow_pm1(std::abs(smp.U_star)) * ps + smp.E -
                           nonlinear_remainder_value(fam, smp.U_star, ph + ps);
        hl[i] = -src_scale * z1[i] * src;
      }
    });
    auto loc = projected_solve(GridField(lg, hl), Wlf, Kl, Dl, so);
    res.kernel_coefficient = loc.coeffs.back();
    phi1 = std::move(loc.phi);

    update_sums();
    for (std::size_t i = 0; i < nl; ++i) {
      if (z1[i] == 0.0) continue;
      const auto y = ylocal[i].coords();
      const auto fp = glued_potentials(a).f_pieces(y, corr.bubble(y, 1), corr.sums(y).first, psi.interpolate(y));
      const double vals[5] = {fp.f1, fp.f2, fp.f3, fp.f4, fp.f5};
      for (int q = 0; q < 5; ++q) pieces[static_cast<std::size_t>(q)] = std::max(pieces[static_cast<std::size_t>(q)], std::abs(vals[q]));
    }
    res.f_pieces = pieces;

    const double next = global_residual();
    increases = next >= current ? increases + 1 : 0;
    current = next;
    res.history.push_back({it, current, 1.0});
    if (current <= opt.tol * res.ansatz_residual) {
      res.converged = true;
      break;
    }
    if (!std::isfinite(current) || increases >= 3) {
      res.diverged = true;
      res.warnings.push_back("residual increased on three consecutive iterations");
      break;
    }
  }
  for (double r : res.contraction)
    if (r >= 1.0) {
      res.warnings.push_back("psi iteration ratio reached " + std::to_string(r));
      break;
    }
  res.final_residual = current;
  res.phi = GridField(g, total);
  res.local_phi = std::move(phi1);
}

}  // namespace

RefineResult refine(const Ansatz& a, const GridSpec& grid, RefineOptions opt) {
  GridSpec g = grid;
  g.N = a.params().N();
  g.validate();
  if (opt.max_iter < 0) throw ConfigError("max_iter must be non-negative");
  RefineResult res;
  if (a.config().k() > 0 && !g.resolves(a.config().mu())) {
    std::ostringstream os;
    os << "grid spacing " << g.h() << " does not resolve mu = " << a.config().mu() << "; correction is grid-level only";
    res.warnings.push_back(os.str());
  }
  if (opt.mode == RefineMode::Direct)
    refine_direct(a, g, opt, res);
  else
    refine_gluing(a, g, opt, res);
  res.u = GridField(g);
  const GridField probe(g);
  Point y(g.N);
  for (std::size_t i = 0; i < g.size(); ++i) {
    probe.point(i, y.coords());
    res.u[i] = a.U_star(y.coords()) + res.phi[i];
  }
  return res;
}

double refined_value(const Ansatz& a, const GridField& phi, std::span<const double> y) {
  return a.U_star(y) + phi.interpolate(y);
}

double rotation_defect(const Ansatz& a, const GridField& phi, int samples) {
  const int k = std::max(a.config().k(), 1);
  const GridSpec& g = phi.spec();
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> U(-0.5 * g.L, 0.5 * g.L);
  const double c = std::cos(2.0 * std::numbers::pi / k), s = std::sin(2.0 * std::numbers::pi / k);
  double worst = 0.0;
  Point y(g.N), z(g.N);
  for (int t = 0; t < samples; ++t) {
    for (int d = 0; d < g.N; ++d) y[d] = U(rng);
    z = y;
    z[0] = c * y[0] - s * y[1];
    z[1] = s * y[0] + c * y[1];
    worst = std::max(worst, std::abs(phi.interpolate(z.coords()) - phi.interpolate(y.coords())));
  }
  const double scale = phi.max_abs();
  return scale > 0.0 ? worst / scale : worst;
}

EnergyIdentity energy_identity(const Ansatz& a, const GridField& phi, QuadratureOptions opt) {
  const BubbleFamily& fam = a.family();
  const QuadratureScheme scheme(a.config(), opt);
  // (-D)^s U* = U^p - sum U_j^p = E + |U*|^{p-1} U*.
  const Integrand self = [&](std::span<const double> y) {
    const auto smp = a.sample(y);
    return smp.U_star * (smp.E + fam.signed_pow_p(smp.U_star));
  };
  const Integrand cross = [&](std::span<const double> y) {
    const double ph = phi.interpolate(y);
    if (ph == 0.0) return 0.0;
    const auto smp = a.sample(y);
    return ph * (smp.E + fam.signed_pow_p(smp.U_star));
  };
  const Integrand pot = [&](std::span<const double> y) {
    const double u = a.U_star(y) + phi.interpolate(y);
    return fam.pow_p(std::abs(u)) * std::abs(u);
  };
  FracLaplacian D(phi.spec(), fam.params().s());
  EnergyIdentity out;
  out.lhs = scheme.integrate(self, Symmetry::Rotation).total() + 2.0 * scheme.integrate(cross).total() +
            D.energy(phi.data());
  out.rhs = scheme.integrate(pot).total();
  out.rel_defect = std::abs(out.lhs - out.rhs) / std::abs(out.rhs);
  return out;
}

void export_grid(const GridField& f, const std::string& path, const nlohmann::json& meta) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + path);
  for (double v : f.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
    bin.write(bytes, 8);
  }
  nlohmann::json side = meta;
  side["n"] = f.spec().n;
  side["L"] = f.spec().L;
  side["N"] = f.spec().N;
  std::ofstream js(path + ".json");
  js << side.dump(2) << "\n";
}

}  // namespace fracbubbles
