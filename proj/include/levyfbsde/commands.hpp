#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "levyfbsde/config.hpp"

namespace levyfbsde {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitRuntime = 3 };

inline constexpr const char* kCsvHeader =
    "experiment_id,scheme,n,eps,sigma_eps,M,seed,err_kind,estimate,se,slope,slope_lo,slope_hi";

struct CsvRow {
  std::string experiment_id;
  std::string scheme;
  double n = 0.0;  // NaN on summary rows
  double eps = 0.0;
  double sigma_eps = 0.0;
  double M = 0.0;
  std::uint64_t seed = 0;
  std::string err_kind;
  double estimate = 0.0;
  double se = 0.0;
  double slope = 0.0;
  double slope_lo = 0.0;
  double slope_hi = 0.0;
};

// %.17g, with every NaN spelled "nan".
std::string format_number(double x);
std::string format_row(const CsvRow& row);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> output_dir;
  bool sqrt_schedule = false;
  bool no_timestamp = false;
};

void apply_overrides(ExperimentConfig& config, const Overrides& o);

struct RunResult {
  std::vector<CsvRow> rows;
  std::vector<std::string> files;  // paths written
};

// One of rates-forward, solve, rates-backward, holder. Throws ConfigError when
// the configuration does not suit the command, anything else on numeric failure.
RunResult run_experiment(const std::string& command, const ExperimentConfig& config,
                         std::ostream& log);

// Loads, overrides, runs; maps failures to exit codes with a diagnostic on `err`.
int run_command(const std::string& command, const std::string& config_path,
                const Overrides& overrides, std::ostream& out, std::ostream& err);

// Runs every built-in consistency check; one line per check on `out`.
int run_selftest(std::ostream& out);

}  // namespace levyfbsde
