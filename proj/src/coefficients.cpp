#include "levyfbsde/coefficients.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace levyfbsde {

namespace {

const std::vector<double> kProbeX = {-2.3, -1.0, -0.31, 0.0, 0.47, 1.2, 2.9};
const std::vector<double> kProbeT = {0.0, 0.37, 1.0};

void check_derivative(const std::string& what, const std::function<double(double)>& fn,
                      const std::function<double(double)>& dfn, double at) {
  constexpr double h = 1e-6;
  const double fd = (fn(at + h) - fn(at - h)) / (2.0 * h);
  const double d = dfn(at);
  if (std::abs(fd - d) > 1e-5 * std::max(1.0, std::abs(d)))
    throw std::invalid_argument("coefficients: derivative of " + what + " fails the " +
                                "finite-difference check at " + std::to_string(at));
}

double param(const PresetParams& given, const PresetParams& defaults, const std::string& key) {
  auto it = given.find(key);
  return it != given.end() ? it->second : defaults.at(key);
}

}  // namespace

void validate(const CoefficientSet& c) {
  if (!c.b || !c.db || !c.beta || !c.dbeta || !c.g || !c.dg || !c.f || !c.df_dx || !c.df_dy ||
      !c.df_dgamma)
    throw std::invalid_argument("coefficients: every coefficient and derivative is required");
  for (double x : kProbeX) {
    check_derivative("b", c.b, c.db, x);
    check_derivative("beta", c.beta, c.dbeta, x);
    check_derivative("g", c.g, c.dg, x);
    for (double t : kProbeT) {
      const double y = 0.3 * x - 0.2, gm = 0.5 - 0.1 * x;
      check_derivative("f in x", [&](double v) { return c.f(t, v, y, gm); },
                       [&](double v) { return c.df_dx(t, v, y, gm); }, x);
      check_derivative("f in y", [&](double v) { return c.f(t, x, v, gm); },
                       [&](double v) { return c.df_dy(t, x, v, gm); }, y);
      check_derivative("f in gamma", [&](double v) { return c.f(t, x, y, v); },
                       [&](double v) { return c.df_dgamma(t, x, y, v); }, gm);
      if (c.linear) {
        const auto& l = *c.linear;
        const double lin = l.f1(t) + l.f2(t) * y + l.f3(t) * gm;
        if (std::abs(lin - c.f(t, x, y, gm)) > 1e-12 * std::max(1.0, std::abs(lin)))
          throw std::invalid_argument("coefficients: linear form disagrees with f");
      }
    }
  }
}

PresetParams preset_defaults(const std::string& name) {
  if (name == "zero_f_identity_g") return {{"b_bar", 0.0}, {"beta0", 1.0}};
  if (name == "linear_bsde")
    return {{"b_bar", 0.0}, {"beta0", 1.0}, {"f1", 0.0}, {"f2", 0.5}, {"f3", 0.0}};
  if (name == "lipschitz_smooth")
    return {{"kappa", 1.0}, {"beta_amp", 0.1}, {"r", 0.2}, {"f3", 0.1}, {"x_coupling", 0.0}};
  throw std::invalid_argument("unknown coefficient preset '" + name + "'");
}

CoefficientSet make_preset(const std::string& name, const PresetParams& params) {
  const PresetParams defaults = preset_defaults(name);
  for (const auto& [k, v] : params) {
    if (!defaults.count(k))
      throw std::invalid_argument("preset '" + name + "' has no parameter '" + k + "'");
    if (!std::isfinite(v))
      throw std::invalid_argument("preset parameter '" + k + "' must be finite");
  }
  CoefficientSet c;
  c.name = name;
  c.g = [](double x) { return x; };
  c.dg = [](double) { return 1.0; };

  if (name == "zero_f_identity_g" || name == "linear_bsde") {
    const double bb = param(params, defaults, "b_bar");
    const double b0 = param(params, defaults, "beta0");
    c.b = [bb](double x) { return bb * x; };
    c.db = [bb](double) { return bb; };
    c.beta = [b0](double) { return b0; };
    c.dbeta = [](double) { return 0.0; };
    double f1 = 0.0, f2 = 0.0, f3 = 0.0;
    if (name == "linear_bsde") {
      f1 = param(params, defaults, "f1");
      f2 = param(params, defaults, "f2");
      f3 = param(params, defaults, "f3");
    }
    c.f = [f1, f2, f3](double, double, double y, double gm) { return f1 + f2 * y + f3 * gm; };
    c.df_dx = [](double, double, double, double) { return 0.0; };
    c.df_dy = [f2](double, double, double, double) { return f2; };
    c.df_dgamma = [f3](double, double, double, double) { return f3; };
    c.linear = LinearGenerator{[f1](double) { return f1; }, [f2](double) { return f2; },
                               [f3](double) { return f3; }};
    c.x_free = true;
    c.lipschitz = std::max({std::abs(bb), std::abs(b0), std::abs(f2), std::abs(f3), 1.0});
  } else {
    const double kappa = param(params, defaults, "kappa");
    const double amp = param(params, defaults, "beta_amp");
    const double r = param(params, defaults, "r");
    const double f3 = param(params, defaults, "f3");
    const double xc = param(params, defaults, "x_coupling");
    c.b = [kappa](double x) { return -kappa * x; };
    c.db = [kappa](double) { return -kappa; };
    c.beta = [amp](double x) { return 1.0 + amp * std::sin(x); };
    c.dbeta = [amp](double x) { return amp * std::cos(x); };
    c.g = [](double x) { return std::sin(x) + 0.5 * x; };
    c.dg = [](double x) { return std::cos(x) + 0.5; };
    c.f = [r, f3, xc](double, double x, double y, double gm) {
      return -r * y + f3 * gm + xc * std::cos(x);
    };
    c.df_dx = [xc](double, double x, double, double) { return -xc * std::sin(x); };
    c.df_dy = [r](double, double, double, double) { return -r; };
    c.df_dgamma = [f3](double, double, double, double) { return f3; };
    if (xc == 0.0) {
      c.linear = LinearGenerator{[](double) { return 0.0; }, [r](double) { return -r; },
                                 [f3](double) { return f3; }};
      c.x_free = true;
    }
    c.lipschitz = std::max({std::abs(kappa), std::abs(amp), std::abs(r), std::abs(f3),
                            std::abs(xc), 1.5});
  }
  validate(c);
  return c;
}

}  // namespace levyfbsde
