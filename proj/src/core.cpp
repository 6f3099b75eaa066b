#include "fracbubbles/core.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace fracbubbles {

Point::Point(int dim) : dim_(dim) {
  if (dim < 1 || dim > kMaxDim) throw ConfigError("point dimension out of range");
}

Point::Point(std::initializer_list<double> coords) : Point(static_cast<int>(coords.size())) {
  std::size_t i = 0;
  for (double v : coords) c_[i++] = v;
}

Point::Point(std::span<const double> coords) : Point(static_cast<int>(coords.size())) {
  for (std::size_t i = 0; i < coords.size(); ++i) c_[i] = coords[i];
}

double Point::norm2() const { return fracbubbles::norm2(coords()); }
double Point::norm() const { return std::sqrt(norm2()); }

Point Point::axis(int dim, int i, double scale) {
  Point e(dim);
  e[i] = scale;
  return e;
}

Point operator+(const Point& a, const Point& b) {
  Point r(a.dim());
  for (int i = 0; i < a.dim(); ++i) r[i] = a[i] + b[i];
  return r;
}

Point operator-(const Point& a, const Point& b) {
  Point r(a.dim());
  for (int i = 0; i < a.dim(); ++i) r[i] = a[i] - b[i];
  return r;
}

Point operator*(double t, const Point& a) {
  Point r(a.dim());
  for (int i = 0; i < a.dim(); ++i) r[i] = t * a[i];
  return r;
}

double distance2(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double norm2(std::span<const double> a) {
  double acc = 0.0;
  for (double v : a) acc += v * v;
  return acc;
}

ProblemParams::ProblemParams(int N, double s, std::optional<double> q) : N_(N), s_(s) {
  if (N < 3) throw ConfigError("N must be at least 3");
  if (N > kMaxDim) throw ConfigError("N exceeds the supported maximum dimension");
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("s must lie in (0, 1)");
  q_ = q.value_or(default_q(N, s));
  const double lo = N / (2.0 * s);
  const double hi = N / s;
  if (!(q_ > lo && q_ < hi)) {
    std::ostringstream os;
    os << "q outside (N/2s, N/s): q=" << q_ << " not in (" << lo << ", " << hi << ")";
    throw ConfigError(os.str());
  }
  two_star_ = 2.0 * N / (N - 2.0 * s);
  p_ = two_star_ - 1.0;
}

nlohmann::json ProblemParams::to_json() const {
  return {{"N", N_}, {"s", s_}, {"q", q_}, {"p", p_}, {"two_star", two_star_}};
}

const Point& BubbleConfig::center(int j) const {
  if (j < 1 || j > k_) throw std::out_of_range("bubble index out of range");
  return centers_[static_cast<std::size_t>(j - 1)];
}

nlohmann::json BubbleConfig::to_json() const {
  return {{"k", k_}, {"delta", delta_}, {"mu", mu_}, {"eta", eta_}, {"mu_k_power", k_power_}};
}

BubbleConfig make_config(const ProblemParams& params, int k, double delta, double eta,
                         double k_power) {
  if (k < 0) throw ConfigError("k must be non-negative");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be positive");
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must lie in (0, 1)");
  if (!(k_power > 0.0)) throw ConfigError("mu_k_power must be positive");

  BubbleConfig cfg;
  cfg.k_ = k;
  cfg.delta_ = delta;
  cfg.eta_ = eta;
  cfg.k_power_ = k_power;
  cfg.dim_ = params.N();
  if (k == 0) return cfg;

  const double mu = std::pow(delta, 2.0 / params.alpha()) * std::pow(static_cast<double>(k), -k_power);
  if (!(mu < 1.0)) {
    std::ostringstream os;
    os << "mu = " << mu << " must be < 1 (delta too large for k = " << k << ")";
    throw ConfigError(os.str());
  }
  cfg.mu_ = mu;
  cfg.ring_radius_ = std::sqrt(1.0 - mu * mu);
  cfg.centers_.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    const double theta = 2.0 * std::numbers::pi * j / k;
    Point c(params.N());
    c[0] = cfg.ring_radius_ * std::cos(theta);
    c[1] = cfg.ring_radius_ * std::sin(theta);
    cfg.centers_.push_back(c);
  }
  return cfg;
}

double pairwise_center_distance(const BubbleConfig& cfg, int i, int j) {
  if (i < 1 || i > cfg.k() || j < 1 || j > cfg.k()) throw std::out_of_range("bubble index out of range");
  if (i == j) throw std::invalid_argument("pairwise distance needs distinct indices");
  return 2.0 * cfg.ring_radius() * std::sin(std::numbers::pi * std::abs(i - j) / cfg.k());
}

Setup setup_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  auto number = [&](const char* key, double fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc[key].is_number()) throw ConfigError(std::string("/") + key + ": expected a number");
    return doc[key].get<double>();
  };
  auto integer = [&](const char* key, int fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc[key].is_number_integer()) throw ConfigError(std::string("/") + key + ": expected an integer");
    return doc[key].get<int>();
  };
  const int N = integer("N", 3);
  const double s = number("s", 0.5);
  std::optional<double> q;
  if (doc.contains("q")) q = number("q", 0.0);
  ProblemParams params(N, s, q);
  BubbleConfig cfg = make_config(params, integer("k", 0), number("delta", 1.0), number("eta", kDefaultEta),
                                 number("mu_k_power", kDefaultKPower));
  return {params, cfg};
}

}  // namespace fracbubbles
