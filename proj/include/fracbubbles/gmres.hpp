#pragma once

#include <functional>
#include <span>
#include <vector>

namespace fracbubbles {

using LinearMap = std::function<void(std::span<const double>, std::span<double>)>;

struct GmresResult {
  int iterations = 0;
  double residual = 0.0;  // final ||b - A x|| / ||b||
  bool converged = false;
  std::vector<double> history;
};

/// Restarted GMRES with right preconditioning; x holds the initial guess.
GmresResult gmres(const LinearMap& A, const LinearMap& Minv, std::span<const double> b, std::span<double> x,
                  double rtol, int restart = 40, int max_iter = 400);

double dot(std::span<const double> a, std::span<const double> b);
double norm2_of(std::span<const double> a);

/// Dense solve by Gaussian elimination with partial pivoting (small systems).
/// Returns false for a numerically singular matrix.
bool dense_solve(std::vector<double> A, std::vector<double>& b, int n);

}  // namespace fracbubbles
