#include "fracbubbles/gmres.hpp"

#include <algorithm>
#include <cmath>

#include "fracbubbles/parallel.hpp"

namespace fracbubbles {

double dot(std::span<const double> a, std::span<const double> b) {
  return parallel_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; }, 1 << 14);
}

double norm2_of(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace {

void axpy(double t, std::span<const double> x, std::span<double> y) {
  parallel_chunks(x.size(), 1 << 14, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) y[i] += t * x[i];
  });
}

}  // namespace

GmresResult gmres(const LinearMap& A, const LinearMap& Minv, std::span<const double> b, std::span<double> x,
                  double rtol, int restart, int max_iter) {
  const std::size_t n = b.size();
  GmresResult res;
  const double bnorm = norm2_of(b);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    res.converged = true;
    return res;
  }
  std::vector<double> r(n), w(n), z(n);
  std::vector<std::vector<double>> V;
  const auto m = static_cast<std::size_t>(restart);

  while (res.iterations < max_iter) {
    A(x, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    double beta = norm2_of(r);
    res.residual = beta / bnorm;
    if (res.history.empty()) res.history.push_back(res.residual);
    if (res.residual <= rtol) {
      res.converged = true;
      return res;
    }
    V.assign(1, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
    std::vector<double> H((m + 1) * m, 0.0), cs(m), sn(m), g(m + 1, 0.0);
    g[0] = beta;
    std::size_t j = 0;
    for (; j < m && res.iterations < max_iter; ++j) {
      Minv(V[j], z);
      A(z, w);
      for (std::size_t i = 0; i <= j; ++i) {
        const double hij = dot(w, V[i]);
        H[i * m + j] = hij;
        axpy(-hij, V[i], w);
      }
      const double hn = norm2_of(w);
      H[(j + 1) * m + j] = hn;
      for (std::size_t i = 0; i < j; ++i) {
        const double a = H[i * m + j], c = H[(i + 1) * m + j];
        H[i * m + j] = cs[i] * a + sn[i] * c;
        H[(i + 1) * m + j] = -sn[i] * a + cs[i] * c;
      }
      const double a = H[j * m + j], c = H[(j + 1) * m + j];
      const double d = std::hypot(a, c);
      cs[j] = d == 0.0 ? 1.0 : a / d;
      sn[j] = d == 0.0 ? 0.0 : c / d;
      H[j * m + j] = d;
      H[(j + 1) * m + j] = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      ++res.iterations;
      res.residual = std::abs(g[j + 1]) / bnorm;
      res.history.push_back(res.residual);
      if (res.residual <= rtol || hn == 0.0) {
        ++j;
        break;
      }
      V.emplace_back(n);
      for (std::size_t i = 0; i < n; ++i) V[j + 1][i] = w[i] / hn;
    }
    std::vector<double> y(j, 0.0);
    for (std::size_t ii = j; ii-- > 0;) {
      double acc = g[ii];
      for (std::size_t k = ii + 1; k < j; ++k) acc -= H[ii * m + k] * y[k];
      y[ii] = acc / H[ii * m + ii];
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < j; ++i) axpy(y[i], V[i], w);
    Minv(w, z);
    axpy(1.0, z, x);
    if (res.residual <= rtol) {
      A(x, r);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
      res.residual = norm2_of(r) / bnorm;
      res.converged = res.residual <= 10.0 * rtol;
      return res;
    }
  }
  return res;
}

bool dense_solve(std::vector<double> A, std::vector<double>& b, int n) {
  const auto N = static_cast<std::size_t>(n);
  double scale = 0.0;
  for (double v : A) scale = std::max(scale, std::abs(v));
  for (std::size_t c = 0; c < N; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < N; ++r)
      if (std::abs(A[r * N + c]) > std::abs(A[piv * N + c])) piv = r;
    if (std::abs(A[piv * N + c]) <= 1e-14 * scale) return false;
    if (piv != c) {
      for (std::size_t k = 0; k < N; ++k) std::swap(A[c * N + k], A[piv * N + k]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < N; ++r) {
      const double f = A[r * N + c] / A[c * N + c];
      for (std::size_t k = c; k < N; ++k) A[r * N + k] -= f * A[c * N + k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = N; c-- > 0;) {
    double acc = b[c];
    for (std::size_t k = c + 1; k < N; ++k) acc -= A[c * N + k] * b[k];
    b[c] = acc / A[c * N + c];
  }
  return true;
}

}  // namespace fracbubbles
