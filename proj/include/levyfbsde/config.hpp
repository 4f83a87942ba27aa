#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "levyfbsde/coefficients.hpp"
#include "levyfbsde/harness.hpp"
#include "levyfbsde/levy.hpp"
#include "levyfbsde/regression.hpp"
#include "levyfbsde/schemes.hpp"

namespace levyfbsde {

// Invalid configuration; `field` is a JSON path such as "model.alpha".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : "config field '" + field + "': " + message),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  std::string experiment_id = "experiment";

  LevyFamily family;
  double e_max = 1.0;
  RhoSpec rho;
  double rho_bound = 2.0;
  int table_nodes = 4096;

  std::string preset;
  PresetParams preset_params;

  double T = 1.0;
  std::vector<int> n;  // one entry unless a sweep was given
  bool n_sweep = false;

  std::vector<double> eps;  // empty under the sqrt schedule
  bool eps_sweep = false;
  bool sqrt_schedule = false;

  Index M = 0;
  double x0 = 1.0;
  BasisSpec basis;
  std::vector<SchemeKind> schemes;
  std::string scheme_selector = "euler";
  GammaConvention gamma = GammaConvention::MarkWeighted;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output_dir = ".";
  bool timestamp = true;

  int refinement = 8;
  int fine_n = 512;
  Index fine_M_factor = 4;
  double delta_fraction = 0.125;
  std::vector<int> holder_divisors = {4, 8, 16};
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
// Effective configuration after defaults; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& c);

ModelSetup make_setup(const ExperimentConfig& c);

}  // namespace levyfbsde
