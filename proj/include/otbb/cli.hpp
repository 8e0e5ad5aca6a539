#pragma once

#include "otbb/bench.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace otbb {

/// Exit-code contract shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumerical = 2;

struct CliConfig {
  std::string command;  // solve, bench, check-mesh or export-system
  // solve and export-system take exactly one value per list; bench sweeps.
  std::vector<std::string> cases{"translation"};
  std::string mesh = "embedded";
  std::vector<int> refine{1};
  std::vector<int> timesteps{8};
  std::vector<std::string> preconds{"bb"};
  bool diagonal = false;
  int threads = 1;
  double mu0 = 1.0;
  double mu_min = 5e-7;
  double mu_factor = 5.0;
  double outer_tol = 1e-5;
  int outer_max = 400;
  double newton_tol = 1e-6;
  std::string newton_stop = "relative";
  std::optional<double> inner_tol;  // overrides every inner tolerance
  int export_ip = 1;                // 1-based IP iteration of the exported system
  int export_newton = 1;            // 1-based Newton step within it
  std::string output = "otbb_out";
  int verbosity = 0;
};

/// Parses argv, reading `--config FILE` (flat `key = value` lines whose keys
/// are the long option names) first; flags override file values. Throws
/// InputError on unknown keys, malformed values or out-of-range settings.
/// Returns std::nullopt after printing help to `out`.
std::optional<CliConfig> parse_config(int argc, const char* const* argv,
                                      std::ostream& out);

/// Throws InputError when a setting is out of range.
void validate(const CliConfig& cfg);

/// Number of IP iterations whose mu stays at or above mu_min.
int ip_iterations_for(double mu0, double mu_min, double mu_factor);

IpOptions ip_options(const CliConfig& cfg);

/// Worker count: --threads, capped by OTBB_THREADS when that is set.
int effective_threads(int requested);

/// Full entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace otbb
