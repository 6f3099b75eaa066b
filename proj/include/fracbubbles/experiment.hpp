#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracbubbles/core.hpp"
#include "fracbubbles/spectral.hpp"

namespace fracbubbles {

enum class Kind { Decay, Invariance, Reduction, Refine, Oracle };

struct ExperimentSpec {
  Kind kind = Kind::Decay;
  ProblemParams params{3, 0.5};
  std::vector<int> k_list;
  double delta = 1.0;
  std::vector<double> delta_list;  // reduction sweep
  double eta = kDefaultEta;
  double mu_k_power = kDefaultKPower;
  GridSpec grid;
  double tol = 0.0;  // 0 selects the kind's default
  RefineMode mode = RefineMode::Direct;
  int max_iter = 60;
  std::string out;
  std::string export_path;  // refine: raw grid dump of u
  int threads = 1;

  nlohmann::json to_json() const;
};

/// Exit codes of an experiment run.
enum ExitCode : int { kPass = 0, kToleranceFailure = 2, kConfigError = 3, kNonConvergence = 4 };

std::string kind_name(Kind k);

/// Fills defaults and validates; ConfigError messages start with the key path.
ExperimentSpec parse_config(const nlohmann::json& doc);
ExperimentSpec parse_config_file(const std::string& path);

/// Runs one experiment, streaming CSV to `out`. On failure a marker row is
/// written before returning the nonzero code.
int run(const ExperimentSpec& spec, std::ostream& out);

}  // namespace fracbubbles
