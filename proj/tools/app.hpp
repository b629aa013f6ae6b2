#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kamtori/kamtori.hpp"

namespace kamtori::app {

enum ExitCode { kOk = 0, kFailure = 1, kNoConvergence = 2, kConfigError = 3 };

// Validated run description. Built from a flat key=value map (config file
// entries overridden by command-line flags).
struct RunConfig {
  std::string command;
  std::string model = "standard";
  bool model_given = false;
  std::map<std::string, double> params;  // explicitly given model parameters only
  std::string omega_text = "golden";
  RotationVector omega;
  int N = 1024;

  double tol = 1e-12;
  double lambda_tol = 1e-10;
  double divisor_floor = 1e-9;
  double twist_floor = 1e-8;
  int max_iter = 30;
  bool counterterm = false;
  bool frame_exact = false;
  bool refine = true;

  // continuation
  std::string param = "eps";
  std::optional<double> from, to, step;
  double min_step = 1e-3;

  // whiskers
  std::string branch = "stable";
  int L = 10;
  double rho = 0.0;
  double s_max = 0.2;

  // files
  std::string out;
  std::string out_dir = ".";
  std::string log;
  std::string summary;
  std::string torus;
  std::string splitting;
  std::string input;
  int points = 64;
  int s_points = 21;
  int threads = 0;

  std::vector<double> schedule() const;
  SolverOptions solver_options() const;

  // File attributes (model, param.*) fill whatever the config left unset.
  MapPtr make_map(const Attributes& file_attrs = {}) const;
};

// Keys accepted in config files and as --key flags.
const std::vector<std::string>& config_keys();
const std::vector<std::string>& flag_keys();  // boolean switches

// Parses "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> read_config_file(const std::string& path);

// Throws ConfigError naming the violated rule.
RunConfig build_config(const std::string& command, const std::map<std::string, std::string>& kv);

// Runs one command, writing artifacts and a JSON summary. Never throws; the
// return value is the process exit code.
int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Command-line entry point.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace kamtori::app
