#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

namespace levyfbsde {

using ScalarFn = std::function<double(double)>;
using GeneratorFn = std::function<double(double t, double x, double y, double gamma)>;

// f(t, x, y, gamma) = f1(t) + f2(t) y + f3(t) gamma
struct LinearGenerator {
  ScalarFn f1, f2, f3;
};

struct CoefficientSet {
  std::string name;
  ScalarFn b, db;
  ScalarFn beta, dbeta;
  ScalarFn g, dg;
  GeneratorFn f, df_dx, df_dy, df_dgamma;
  std::optional<LinearGenerator> linear;
  double lipschitz = 1.0;

  // f does not depend on x (needed by the Malliavin scheme).
  bool x_free = false;
};

// Throws std::invalid_argument when a derivative disagrees with central
// differences or the linear form disagrees with f on the probe set.
void validate(const CoefficientSet& c);

using PresetParams = std::map<std::string, double>;

// Catalog: zero_f_identity_g, linear_bsde, lipschitz_smooth. Unknown preset or
// parameter names throw.
CoefficientSet make_preset(const std::string& name, const PresetParams& params = {});
PresetParams preset_defaults(const std::string& name);

}  // namespace levyfbsde
