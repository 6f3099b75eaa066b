#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "fracbubbles/experiment.hpp"
#include "fracbubbles/parallel.hpp"

using namespace fracbubbles;

int main(int argc, char** argv) {
  CLI::App app{"k-bubble ansatz experiments: decay, invariance, reduction, refine, oracle"};
  std::string config, kind, out;
  std::optional<int> k, threads, grid_n;
  std::optional<double> delta, grid_L, tol;
  app.add_option("--config", config, "JSON experiment file")->check(CLI::ExistingFile);
  app.add_option("--kind", kind, "decay | invariance | reduction | refine | oracle");
  app.add_option("--k", k, "single k (replaces k_list)");
  app.add_option("--delta", delta, "delta");
  app.add_option("--out", out, "CSV path (stdout if omitted)");
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--grid-n", grid_n, "grid points per side");
  app.add_option("--grid-L", grid_L, "grid half-width");
  app.add_option("--tol", tol, "tolerance override");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  ExperimentSpec spec;
  try {
    nlohmann::json doc = nlohmann::json::object();
    if (!config.empty()) {
      std::ifstream in(config);
      in >> doc;
    }
    if (!kind.empty()) doc["kind"] = kind;
    if (k) {
      doc.erase("k_list");
      doc["k"] = *k;
    }
    if (delta) doc["delta"] = *delta;
    if (threads) doc["threads"] = *threads;
    if (grid_n) doc["grid"]["n"] = *grid_n;
    if (grid_L) doc["grid"]["L"] = *grid_L;
    if (tol) doc["tol"] = *tol;
    if (!out.empty()) doc["out"] = out;
    spec = parse_config(doc);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config: " << e.what() << "\n";
    return kConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "config " << e.what() << "\n";
    return kConfigError;
  }

  std::ofstream file;
  if (!spec.out.empty()) {
    file.open(spec.out);
    if (!file) {
      std::cerr << "cannot open " << spec.out << "\n";
      return kConfigError;
    }
  }
  std::ostream& os = spec.out.empty() ? std::cout : file;
  try {
    const int rc = run(spec, os);
    if (rc != kPass) std::cerr << kind_name(spec.kind) << ": failed with exit code " << rc << "\n";
    return rc;
  } catch (const ConfigError& e) {
    os << "FAILED," << e.what() << "\n";
    std::cerr << "config " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    os << "FAILED," << e.what() << "\n";
    std::cerr << e.what() << "\n";
    return kNonConvergence;
  }
}
