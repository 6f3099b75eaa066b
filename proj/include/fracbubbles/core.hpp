#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace fracbubbles {

/// Largest supported ambient dimension. Points live on the stack.
inline constexpr int kMaxDim = 16;

/// Thrown for invalid user-facing parameters (bad N, s, q, k, delta, eta).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A point of R^N with fixed capacity kMaxDim.
class Point {
 public:
  Point() = default;
  explicit Point(int dim);
  Point(std::initializer_list<double> coords);
  explicit Point(std::span<const double> coords);

  int dim() const { return dim_; }
  double& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }

  std::span<const double> coords() const { return {c_.data(), static_cast<std::size_t>(dim_)}; }
  std::span<double> coords() { return {c_.data(), static_cast<std::size_t>(dim_)}; }
  operator std::span<const double>() const { return coords(); }

  double norm2() const;
  double norm() const;

  /// Unit vector e_i (0-based) scaled by `scale`.
  static Point axis(int dim, int i, double scale = 1.0);

 private:
  std::array<double, kMaxDim> c_{};
  int dim_ = 0;
};

Point operator+(const Point& a, const Point& b);
Point operator-(const Point& a, const Point& b);
Point operator*(double t, const Point& a);

double distance2(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Dimension, fractional order, and the derived critical exponents.
///
/// p = (N+2s)/(N-2s) and 2* = 2N/(N-2s) are computed once at construction,
/// and the weight exponent q is checked against N/(2s) < q < N/s.
class ProblemParams {
 public:
  /// Default weight exponent: 2N/(3s), which is 4 for (N, s) = (3, 1/2).
  static double default_q(int N, double s) { return 2.0 * N / (3.0 * s); }

  ProblemParams(int N, double s, std::optional<double> q = std::nullopt);

  int N() const { return N_; }
  double s() const { return s_; }
  double q() const { return q_; }
  double p() const { return p_; }
  double two_star() const { return two_star_; }
  /// Decay exponent N - 2s of the bubble.
  double alpha() const { return N_ - 2.0 * s_; }

  nlohmann::json to_json() const;

 private:
  int N_;
  double s_;
  double q_;
  double p_;
  double two_star_;
};

/// k bubbles on the circle of radius sqrt(1 - mu^2) in the (y1, y2) plane.
class BubbleConfig {
 public:
  int k() const { return k_; }
  double delta() const { return delta_; }
  double mu() const { return mu_; }
  double eta() const { return eta_; }
  /// Exponent of k in mu = delta^{2/(N-2s)} k^{-power}.
  double k_power() const { return k_power_; }
  int dim() const { return dim_; }

  const std::vector<Point>& centers() const { return centers_; }
  /// 1-based center accessor; throws std::out_of_range.
  const Point& center(int j) const;
  /// Radius sqrt(1 - mu^2) of the center circle.
  double ring_radius() const { return ring_radius_; }

  nlohmann::json to_json() const;

  friend BubbleConfig make_config(const ProblemParams&, int, double, double, double);

 private:
  int k_ = 0;
  double delta_ = 1.0;
  double mu_ = 0.0;
  double eta_ = 0.1;
  double k_power_ = 3.0;
  int dim_ = 3;
  double ring_radius_ = 1.0;
  std::vector<Point> centers_;
};

inline constexpr double kDefaultEta = 0.1;
inline constexpr double kDefaultKPower = 3.0;

/// mu = delta^{2/(N-2s)} k^{-k_power}; centers on the circle |xi|^2 + mu^2 = 1.
/// k = 0 gives the bubble-free configuration (mu reported as 0).
BubbleConfig make_config(const ProblemParams& params, int k, double delta, double eta = kDefaultEta,
                         double k_power = kDefaultKPower);

/// |xi_i - xi_j| = 2 sqrt(1 - mu^2) sin(pi |i - j| / k), 1-based indices.
double pairwise_center_distance(const BubbleConfig& cfg, int i, int j);

struct Setup {
  ProblemParams params;
  BubbleConfig config;
};

/// Reads {"N","s","q","k","delta","eta"} (plus optional "mu_k_power"),
/// filling defaults N=3, s=0.5, q=2N/(3s), k=0, delta=1, eta=0.1.
Setup setup_from_json(const nlohmann::json& doc);

}  // namespace fracbubbles
