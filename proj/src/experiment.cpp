#include "fracbubbles/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "fracbubbles/ansatz.hpp"
#include "fracbubbles/bubbles.hpp"
#include "fracbubbles/parallel.hpp"
#include "fracbubbles/quadrature.hpp"
#include "fracbubbles/reduction.hpp"

namespace fracbubbles {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw ConfigError(path + ": " + msg); }

double get_number(const nlohmann::json& doc, const std::string& key, double fallback, const std::string& prefix = "") {
  if (!doc.contains(key)) return fallback;
  if (!doc[key].is_number()) fail(prefix + "/" + key, "expected a number");
  return doc[key].get<double>();
}

int get_int(const nlohmann::json& doc, const std::string& key, int fallback, const std::string& prefix = "") {
  if (!doc.contains(key)) return fallback;
  if (!doc[key].is_number_integer()) fail(prefix + "/" + key, "expected an integer");
  return doc[key].get<int>();
}

std::string get_string(const nlohmann::json& doc, const std::string& key, const std::string& fallback) {
  if (!doc.contains(key)) return fallback;
  if (!doc[key].is_string()) fail("/" + key, "expected a string");
  return doc[key].get<std::string>();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

class Csv {
 public:
  Csv(std::ostream& os, const ExperimentSpec& spec, const std::vector<std::string>& header) : os_(os) {
    os_ << "# spec: " << spec.to_json().dump() << "\n";
    row_strings(header);
  }
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << quote(cells[i]);
    os_ << "\n";
    os_.flush();
  }
  int failure(int code, const std::string& why) {
    row_strings({"FAILED", why});
    return code;
  }

 private:
  std::ostream& os_;
};

double tol_or(const ExperimentSpec& s, double fallback) { return s.tol > 0.0 ? s.tol : fallback; }

BubbleFamily calibrated_family(const ExperimentSpec& s) {
  return BubbleFamily(s.params, calibrate_amplitude(s.params, s.grid).amplitude);
}

int run_decay(const ExperimentSpec& s, std::ostream& os) {
  Csv csv(os, s, {"k", "norm_starstar_E", "est_rel_error", "ratio_to_prev", "local_slope"});
  const BubbleFamily fam(s.params);
  const double tol = tol_or(s, 1e-2);
  const double max_ratio = std::pow(2.0, -0.70);
  double prev = 0.0;
  int prev_k = 0;
  int status = kPass;
  std::string why;
  for (int k : s.k_list) {
    const Ansatz a(fam, make_config(s.params, k, s.delta, s.eta, s.mu_k_power));
    QuadratureOptions opt;
    opt.tol = tol;
    const QuadratureScheme scheme(a.config(), opt);
    const auto E = a.residual_field();
    const NormResult r = norm_starstar([&E](std::span<const double> y) { return E(y); }, s.params, scheme,
                                       Symmetry::Rotation);
    const double ratio = prev > 0.0 ? r.value / prev : std::nan("");
    const double slope = prev > 0.0 ? std::log(ratio) / std::log(static_cast<double>(k) / prev_k) : std::nan("");
    csv.row_strings({std::to_string(k), fmt(r.value), fmt(r.est_rel_error), fmt(ratio), fmt(slope)});
    if (!r.converged && status == kPass) {
      status = kNonConvergence;
      why = "quadrature error above tolerance at k=" + std::to_string(k);
    }
    if (prev > 0.0 && !(ratio <= std::pow(static_cast<double>(k) / prev_k, std::log2(max_ratio))) && status == kPass) {
      status = kToleranceFailure;
      why = "norm did not decay with slope <= -0.70 at k=" + std::to_string(k);
    }
    prev = r.value;
    prev_k = k;
  }
  return status == kPass ? kPass : csv.failure(status, why);
}

struct Check {
  std::string name;
  double value;
  double bound;
  bool at_least = false;
  bool pass() const { return at_least ? value >= bound : value <= bound; }
};

std::vector<Check> invariance_checks(const ExperimentSpec& s) {
  const ProblemParams& P = s.params;
  const BubbleFamily fam(P);
  const int N = P.N();
  const int k = s.k_list.empty() ? 8 : s.k_list.front();
  std::vector<Check> out;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> gauss;
  auto random_point = [&] {
    Point y(N);
    for (int d = 0; d < N; ++d) y[d] = gauss(rng);
    return y;
  };

  {
    double worst = 0.0, worst_inv = 0.0;
    const double mu = 0.3;
    Point xi(N);
    xi[0] = std::sqrt(1.0 - mu * mu);
    const Field w = bubble_field(fam, mu, xi);
    const Field kw = kelvin_field(w, P);
    const Field kkw = kelvin_field(kw, P);
    for (int t = 0; t < 100; ++t) {
      const Point y = random_point();
      worst = std::max(worst, std::abs(kw(y) - w(y)) / std::abs(w(y)));
      worst_inv = std::max(worst_inv, std::abs(kkw(y) - w(y)) / std::abs(w(y)));
    }
    out.push_back({"kelvin_on_shell", worst, 1e-12});
    out.push_back({"kelvin_involution", worst_inv, 1e-12});
    Point xo(N);
    xo[0] = std::sqrt(0.9 - mu * mu);
    const Field wo = bubble_field(fam, mu, xo);
    const Point y = Point::axis(N, 0, 2.0);
    out.push_back({"kelvin_off_shell", std::abs(kelvin(wo, P, y) - wo(y)) / std::abs(wo(y)), 1e-6, true});
  }

  const Ansatz a(fam, make_config(P, k, s.delta, s.eta, s.mu_k_power));
  {
    double worst = 0.0;
    const Field E = a.residual_field();
    const Field ks = kelvin_field(E, P, KelvinMode::Covariant);
    for (int t = 0; t < 100; ++t) {
      const Point y = random_point();
      worst = std::max(worst, std::abs(ks(y) - E(y)) / std::max(std::abs(E(y)), 1e-300));
    }
    out.push_back({"residual_kelvin_covariance", worst, 1e-10});
  }
  {
    const SymmetryGroup G(k, N);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const Point y = random_point();
      const double e0 = a.residual(y);
      for (int g = 0; g < G.order(); ++g)
        worst = std::max(worst, std::abs(a.residual(G.apply(g, y)) - e0) / std::max(std::abs(e0), 1e-300));
    }
    out.push_back({"residual_group_invariance", worst, 1e-10});
  }
  {
    const Ansatz a0(fam, make_config(P, 0, s.delta));
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) worst = std::max(worst, std::abs(a0.residual(random_point())));
    out.push_back({"residual_k0", worst, 1e-14});
  }
  {
    QuadratureOptions opt;
    const QuadratureScheme scheme(a.config(), opt);
    const auto E = a.residual_field();
    const Integrand Ef = [&E](std::span<const double> y) { return E(y); };
    const double nE = norm_starstar(Ef, P, scheme, Symmetry::Rotation).value;
    for (int l = 1; l <= N; ++l) {
      const Field v = kernel_field(fam, l);
      const double nv = norm_starstar([&v](std::span<const double> y) { return v(y); }, P, QuadratureScheme(make_config(P, 0, 1.0), opt)).value;
      const double I = project_kernel(Ef, l, fam, scheme, Symmetry::Rotation).value;
      out.push_back({"kernel_orthogonality_l" + std::to_string(l), std::abs(I) / (nE * nv), 1e-6});
    }
  }
  {
    GridSpec g = s.grid;
    g.N = N;
    g.n = std::min(g.n, 32);
    std::vector<double> f(g.size()), h(g.size());
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (auto& v : f) v = U(rng);
    for (auto& v : h) v = U(rng);
    FracLaplacian D(g, P.s());
    std::vector<double> Df(f.size()), Dh(h.size());
    D.apply(f, Df);
    D.apply(h, Dh);
    const double lhs = dot(Df, h), rhs = dot(f, Dh);
    out.push_back({"spectral_self_adjoint", std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-300), 1e-12});

    const GridSymmetry S(g, 4);
    std::vector<double> sf(f.begin(), f.end()), Dsf(f.size()), sDf(Df.begin(), Df.end());
    S.symmetrize(sf);
    D.apply(sf, Dsf);
    S.symmetrize(sDf);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      worst = std::max(worst, std::abs(Dsf[i] - sDf[i]));
      scale = std::max(scale, std::abs(sDf[i]));
    }
    out.push_back({"spectral_symmetry_commutation", worst / scale, 1e-12});
  }
  return out;
}

int run_checks(const ExperimentSpec& s, std::ostream& os, const std::vector<Check>& checks,
               const std::vector<std::string>& header, bool with_pass) {
  Csv csv(os, s, header);
  std::string why;
  for (const auto& c : checks) {
    std::vector<std::string> row{c.name, fmt(c.value), fmt(c.bound)};
    if (with_pass) row.push_back(c.pass() ? "true" : "false");
    csv.row_strings(row);
    if (!c.pass() && why.empty()) why = c.name + " outside tolerance";
  }
  return why.empty() ? kPass : csv.failure(kToleranceFailure, why);
}

int run_reduction(const ExperimentSpec& s, std::ostream& os) {
  Csv csv(os, s, {"k", "S_k", "a_N_est", "C_N", "delta_star", "delta", "projection", "leading"});
  const BubbleFamily fam(s.params);
  const ANEstimate aN = a_N(s.params);
  const NormResult C = C_N(fam);
  const double dstar = delta_star(aN);
  const double rate = s.params.N() - s.params.s();
  std::vector<std::vector<double>> scaled(s.delta_list.size());
  std::vector<double> last_values;
  int status = kPass;
  std::string why;
  for (int k : s.k_list) {
    last_values.clear();
    for (std::size_t i = 0; i < s.delta_list.size(); ++i) {
      const double d = s.delta_list[i];
      const BubbleConfig cfg = make_config(s.params, k, d, s.eta, s.mu_k_power);
      const Ansatz a(fam, cfg);
      QuadratureOptions opt;
      opt.tol = tol_or(s, 1e-2);
      const ProjectionResult pr = numerical_projection(a, opt);
      const double lead = leading_projection(C.value, aN.value, s.params, k, d);
      csv.row_strings({std::to_string(k), fmt(interaction_sum(cfg, s.params)), fmt(aN.value), fmt(C.value), fmt(dstar),
                       fmt(d), fmt(pr.value), fmt(lead)});
      last_values.push_back(pr.value);
      scaled[i].push_back(std::abs(pr.value - lead) * std::pow(static_cast<double>(k), rate));
    }
  }
  if (!aN.converged) {
    status = kNonConvergence;
    why = "a_N extrapolation did not settle";
  }
  if (status == kPass && !sign_bracket(s.delta_list, last_values).found) {
    status = kToleranceFailure;
    why = "projection does not change sign over the delta grid";
  }
  if (status == kPass && s.k_list.size() > 1)
    for (const auto& v : scaled) {
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      if (*hi > 3.0 * *lo) {
        status = kToleranceFailure;
        why = "scaled remainder varies by more than a factor 3";
        break;
      }
    }
  return status == kPass ? kPass : csv.failure(status, why);
}

int run_refine(const ExperimentSpec& s, std::ostream& os) {
  Csv csv(os, s, {"iter", "residual_norm", "damping"});
  const BubbleFamily fam = calibrated_family(s);
  const int k = s.k_list.empty() ? 8 : s.k_list.front();
  const Ansatz a(fam, make_config(s.params, k, s.delta, s.eta, s.mu_k_power));
  RefineOptions opt;
  opt.mode = s.mode;
  opt.max_iter = s.max_iter;
  if (s.tol > 0.0) opt.tol = s.tol;
  const RefineResult r = refine(a, s.grid, opt);
  for (const auto& h : r.history) csv.row_strings({std::to_string(h.iter), fmt(h.residual_norm), fmt(h.damping)});
  if (!s.export_path.empty()) {
    nlohmann::json meta = {{"s", s.params.s()}, {"k", k}, {"delta", s.delta}};
    export_grid(r.u, s.export_path, meta);
  }
  if (r.diverged) return csv.failure(kNonConvergence, "refinement diverged");
  if (!(r.final_residual <= 0.1 * r.ansatz_residual))
    return csv.failure(kToleranceFailure, "residual not reduced tenfold");
  return kPass;
}

std::vector<Check> oracle_checks(const ExperimentSpec& s) {
  const ProblemParams& P = s.params;
  std::vector<Check> out;
  const Calibration cal = calibrate_amplitude(P, s.grid);
  out.push_back({"spectral_calibration", cal.rel_sup_error, 5e-3});
  out.push_back({"amplitude_vs_closed_form", std::abs(cal.amplitude.c / cal.closed_form_c - 1.0), 5e-3});
  const BubbleFamily fam(P, cal.amplitude);
  const int k = s.k_list.empty() ? 8 : s.k_list.front();
  const Ansatz a(fam, make_config(P, k, s.delta, s.eta, s.mu_k_power));
  out.push_back({"residual_identity", residual_oracle(a, s.grid).rel_sup_error, 1e-2});
  for (int l = 1; l <= P.N() + 1; ++l) {
    const GridField v = GridField::sample(s.grid, [&fam, l](std::span<const double> y) { return fam.kernel(l, y); }, true);
    const GridField Lv = apply_L0(v, fam);
    const GridField Wv = GridField::sample(
        s.grid, [&fam, l](std::span<const double> y) { return fam.p() * fam.pow_pm1(fam.U_r2(norm2(y))) * fam.kernel(l, y); });
    out.push_back({"kernel_L0_l" + std::to_string(l), Lv.interior_max_abs() / Wv.interior_max_abs(), 5e-3});
  }
  {
    GridSpec g = s.grid;
    g.n = 64;
    GridField phi = GridField::sample(g, [](std::span<const double> y) { return std::exp(-norm2(y)) * (1.0 + y[0]); });
    std::vector<int> ls;
    for (int l = 1; l <= P.N() + 1; ++l) ls.push_back(l);
    const KernelSet K = kernel_set(fam, g, ls);
    std::vector<double> b(ls.size());
    for (std::size_t i = 0; i < ls.size(); ++i) b[i] = dot(phi.data(), K.Wv[i].data());
    dense_solve(K.gram, b, static_cast<int>(ls.size()));
    for (std::size_t l = 0; l < ls.size(); ++l)
      for (std::size_t i = 0; i < phi.size(); ++i) phi[i] -= b[l] * K.v[l][i];
    const GridField h = apply_L0(phi, fam);
    GridField d = projected_solve(h, fam).phi;
    d -= phi;
    out.push_back({"manufactured_solve", d.l2() / phi.l2(), 1e-2});
  }
  const ANEstimate aN = a_N(P);
  out.push_back({"a_N_vs_one_sixth", std::abs(aN.value - 1.0 / 6.0), 1e-4});
  return out;
}

}  // namespace

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::Decay: return "decay";
    case Kind::Invariance: return "invariance";
    case Kind::Reduction: return "reduction";
    case Kind::Refine: return "refine";
    case Kind::Oracle: return "oracle";
  }
  return "?";
}

nlohmann::json ExperimentSpec::to_json() const {
  nlohmann::json j = params.to_json();
  j["kind"] = kind_name(kind);
  j["k_list"] = k_list;
  j["delta"] = delta;
  j["delta_list"] = delta_list;
  j["eta"] = eta;
  j["mu_k_power"] = mu_k_power;
  j["grid"] = grid.to_json();
  j["tol"] = tol;
  j["mode"] = mode == RefineMode::Direct ? "direct" : "gluing";
  j["max_iter"] = max_iter;
  j["threads"] = threads;
  return j;
}

ExperimentSpec parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) fail("", "configuration must be a JSON object");
  ExperimentSpec s;
  const std::string kind = get_string(doc, "kind", "");
  if (kind == "decay")
    s.kind = Kind::Decay;
  else if (kind == "invariance")
    s.kind = Kind::Invariance;
  else if (kind == "reduction")
    s.kind = Kind::Reduction;
  else if (kind == "refine")
    s.kind = Kind::Refine;
  else if (kind == "oracle")
    s.kind = Kind::Oracle;
  else
    fail("/kind", "expected one of decay, invariance, reduction, refine, oracle");

  const int N = get_int(doc, "N", 3);
  const double sv = get_number(doc, "s", 0.5);
  std::optional<double> q;
  if (doc.contains("q")) q = get_number(doc, "q", 0.0);
  try {
    s.params = ProblemParams(N, sv, q);
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    fail(what.rfind("q ", 0) == 0 ? "/q" : (what.rfind("s ", 0) == 0 ? "/s" : "/N"), what);
  }

  if (doc.contains("k_list")) {
    const auto& kl = doc["k_list"];
    if (!kl.is_array() || kl.empty()) fail("/k_list", "expected a non-empty array of integers");
    for (std::size_t i = 0; i < kl.size(); ++i) {
      if (!kl[i].is_number_integer()) fail("/k_list/" + std::to_string(i), "expected an integer");
      const int k = kl[i].get<int>();
      if (k < 0) fail("/k_list/" + std::to_string(i), "k must be non-negative");
      if (!s.k_list.empty() && k <= s.k_list.back()) fail("/k_list", "k_list must be strictly increasing");
      s.k_list.push_back(k);
    }
  } else if (doc.contains("k")) {
    s.k_list = {get_int(doc, "k", 8)};
    if (s.k_list.front() < 0) fail("/k", "k must be non-negative");
  } else {
    switch (s.kind) {
      case Kind::Decay: s.k_list = {8, 16, 32, 64, 128}; break;
      case Kind::Reduction: s.k_list = {32, 64, 128}; break;
      default: s.k_list = {8}; break;
    }
  }

  s.delta = get_number(doc, "delta", 1.0);
  if (!(s.delta > 0.0)) fail("/delta", "delta must be positive");
  if (doc.contains("delta_list")) {
    const auto& dl = doc["delta_list"];
    if (!dl.is_array() || dl.empty()) fail("/delta_list", "expected a non-empty array of numbers");
    for (std::size_t i = 0; i < dl.size(); ++i) {
      if (!dl[i].is_number() || !(dl[i].get<double>() > 0.0))
        fail("/delta_list/" + std::to_string(i), "expected a positive number");
      s.delta_list.push_back(dl[i].get<double>());
    }
  } else {
    s.delta_list = s.kind == Kind::Reduction ? std::vector<double>{3.0, 6.0, 12.0} : std::vector<double>{s.delta};
  }

  s.eta = get_number(doc, "eta", kDefaultEta);
  if (!(s.eta > 0.0 && s.eta < 1.0)) fail("/eta", "eta must lie in (0, 1)");
  s.mu_k_power = get_number(doc, "mu_k_power", kDefaultKPower);
  if (!(s.mu_k_power > 0.0)) fail("/mu_k_power", "must be positive");

  s.grid.N = N;
  if (doc.contains("grid")) {
    const auto& g = doc["grid"];
    if (!g.is_object()) fail("/grid", "expected an object");
    s.grid.n = get_int(g, "n", s.grid.n, "/grid");
    s.grid.L = get_number(g, "L", s.grid.L, "/grid");
    s.grid.window = get_number(g, "window", 0.5 * s.grid.L, "/grid");
  }
  try {
    s.grid.validate();
  } catch (const ConfigError& e) {
    fail("/grid", e.what());
  }

  s.tol = get_number(doc, "tol", 0.0);
  if (s.tol < 0.0) fail("/tol", "tol must be non-negative");
  const std::string mode = get_string(doc, "mode", "direct");
  if (mode == "direct")
    s.mode = RefineMode::Direct;
  else if (mode == "gluing")
    s.mode = RefineMode::Gluing;
  else
    fail("/mode", "expected direct or gluing");
  s.max_iter = get_int(doc, "max_iter", 60);
  if (s.max_iter < 0) fail("/max_iter", "must be non-negative");
  s.out = get_string(doc, "out", "");
  s.export_path = get_string(doc, "export", "");
  s.threads = get_int(doc, "threads", 1);
  if (s.threads < 1) fail("/threads", "must be at least 1");

  for (std::size_t i = 0; i < s.k_list.size(); ++i)
    for (double d : s.delta_list) {
      try {
        make_config(s.params, s.k_list[i], d, s.eta, s.mu_k_power);
      } catch (const ConfigError& e) {
        fail("/k_list/" + std::to_string(i), e.what());
      }
    }
  return s;
}

ExperimentSpec parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_config(doc);
}

int run(const ExperimentSpec& s, std::ostream& out) {
  set_thread_count(s.threads);
  switch (s.kind) {
    case Kind::Decay: return run_decay(s, out);
    case Kind::Invariance:
      return run_checks(s, out, invariance_checks(s), {"check_name", "max_defect", "tolerance", "pass"}, true);
    case Kind::Reduction: return run_reduction(s, out);
    case Kind::Refine: return run_refine(s, out);
    case Kind::Oracle:
      return run_checks(s, out, oracle_checks(s), {"test_name", "measured_error", "bound"}, false);
  }
  return kConfigError;
}

}  // namespace fracbubbles
