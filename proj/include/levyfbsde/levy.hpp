#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "levyfbsde/rng.hpp"

namespace levyfbsde {

struct LevyFamily {
  enum class Kind { SymmetricStable, TemperedStable, ExponentialTails };

  Kind kind = Kind::SymmetricStable;
  double alpha = 0.5;
  double lambda = 1.0;
  double c = 1.0;

  static LevyFamily symmetric_stable(double alpha);
  static LevyFamily tempered_stable(double alpha, double lambda);
  static LevyFamily exponential_tails(double lambda, double c);

  std::string name() const;
};

// Weight function inside the generator's jump argument.
struct RhoSpec {
  enum class Kind { Constant, Cosine };

  Kind kind = Kind::Constant;
  double scale = 1.0;
  double frequency = 1.0;  // Cosine only: scale * cos(frequency * e)

  static RhoSpec constant(double value) { return {Kind::Constant, value, 1.0}; }
  static RhoSpec cosine(double scale, double frequency) { return {Kind::Cosine, scale, frequency}; }

  double operator()(double e) const;
  double sup_abs() const;
};

// Integrands against nu.
enum class Moment {
  Mass,         // 1
  AbsMark,      // |e|
  Mark,         // e
  Square,       // e^2
  Rho,          // rho(e)
  RhoMark,      // rho(e) e
  RhoSquare,    // rho(e) e^2
  Rho2Square,   // rho(e)^2 e^2
  Rho2,         // rho(e)^2
};

std::string moment_name(Moment m);

class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& integrand, double lo, double hi, double error_estimate);
  const std::string& integrand() const { return integrand_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  std::string integrand_;
  double lo_, hi_;
};

class LevyModel {
 public:
  explicit LevyModel(LevyFamily family, RhoSpec rho = {}, double rho_bound = 2.0,
                     double e_max = 1.0);

  const LevyFamily& family() const { return family_; }
  const RhoSpec& rho() const { return rho_; }
  double rho_bound() const { return rho_bound_; }
  double e_max() const { return e_max_; }

  // Lebesgue density of nu at e, zero outside 0 < |e| <= e_max.
  double density(double e) const;
  double kernel(Moment m, double e) const;

  // Integral of the moment over lo < |e| <= hi (both signs).
  double integrate(Moment m, double lo, double hi) const;
  double integrate_quadrature(Moment m, double lo, double hi) const;
  std::optional<double> integrate_closed_form(Moment m, double lo, double hi) const;

  // Integral of e^2 nu(de) over the whole support.
  double second_moment() const { return second_moment_; }
  // Every supported family has density ~ |e|^{-1-a}, a >= 0, at the origin.
  bool infinite_activity() const { return true; }
  bool symmetric() const { return true; }

 private:
  double one_sided_density(double a) const;
  double side_quadrature(Moment m, double lo, double hi, double sign) const;
  std::optional<double> side_closed_form(Moment m, double lo, double hi) const;

  LevyFamily family_;
  RhoSpec rho_;
  double rho_bound_;
  double e_max_;
  double second_moment_ = 0.0;
};

struct TruncationView {
  double eps = 0.0;
  double sigma_eps = 0.0;     // sqrt of int_{|e|<=eps} e^2 nu
  double nu_big = 0.0;        // nu(|e| > eps)
  double m_big = 0.0;         // int_{|e|>eps} e^2 nu
  double rho2_m_big = 0.0;    // int_{|e|>eps} rho^2 e^2 nu
  double rho2_nu_big = 0.0;   // int_{|e|>eps} rho^2 nu
  double rho_e_nu_big = 0.0;  // int_{|e|>eps} rho e nu
  double rho_nu_big = 0.0;    // int_{|e|>eps} rho nu
  double rho_m_big = 0.0;     // int_{|e|>eps} rho e^2 nu
  double e_nu_big = 0.0;      // int_{|e|>eps} e nu, the jump compensator
  double abs_e_nu_big = 0.0;  // int_{|e|>eps} |e| nu
  double total_m = 0.0;       // int e^2 nu

  double sigma2() const { return sigma_eps * sigma_eps; }
};

TruncationView make_truncation(const LevyModel& model, double eps);

// Which kernel multiplies U inside the generator's jump argument.
//   MarkWeighted: Gamma = int rho U e^2 nu, Euler weight rho(e) e   (default)
//   Unweighted:   Gamma = int rho U e nu,   Euler weight rho(e)
enum class GammaConvention { MarkWeighted, Unweighted };

GammaConvention parse_gamma_convention(const std::string& s);
std::string to_string(GammaConvention c);
Moment euler_jump_weight(GammaConvention c);
double gamma_kernel_mass(const TruncationView& view, GammaConvention c);
// Mass of the squared weight kernel in the Doleans drift of the Malliavin weights.
double weight_quadratic_mass(const TruncationView& view, GammaConvention c);

struct JumpEvent {
  double time;
  double mark;
};

// Compound Poisson sampler for the jumps with |e| > floor.
class JumpSampler {
 public:
  JumpSampler(const LevyModel& model, double floor, int table_nodes = 4096);

  double floor() const { return floor_; }
  double intensity() const { return intensity_; }
  // Inverse CDF of |e| given |e| > floor.
  double magnitude(double u) const;

  std::vector<JumpEvent> sample(double horizon, const CounterStream& stream,
                                std::uint64_t path) const;

 private:
  double floor_;
  double intensity_ = 0.0;
  std::vector<double> log_nodes_;
  std::vector<double> cdf_;
};

std::vector<JumpEvent> sample_big_jumps(const TruncationView& view, const LevyModel& model,
                                        double horizon, const CounterStream& stream,
                                        std::uint64_t path = 0);

}  // namespace levyfbsde
