#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "levyfbsde/forward.hpp"
#include "levyfbsde/schemes.hpp"
#include "levyfbsde/stats.hpp"

namespace levyfbsde {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_lo = std::numeric_limits<double>::quiet_NaN();
  double slope_hi = std::numeric_limits<double>::quiet_NaN();
};

// Least squares of log e on log h.
RateFit fit_rate(const std::vector<std::pair<double, double>>& points);
// Same fit plus a 95% slope interval from a parametric bootstrap of the errors.
RateFit fit_rate(const std::vector<std::pair<double, double>>& points,
                 const std::vector<double>& ses, std::uint64_t seed, int resamples = 200);

struct ErrorComponents {
  Estimate total;          // root of the combined squared error
  double y_term = 0.0;     // sup over nodes of E|dY|^2
  double z_term = 0.0;     // integrated E|dZ|^2, or the stochastic-integral term
  double gamma_term = 0.0; // integrated E|dGamma|^2
};

// E sup_i |X^eps_{t_i} - X_{t_i}|^2 over the coarse nodes.
Estimate estimate_err_forward(const ForwardPaths& coarse, const ForwardPaths& reference,
                              std::uint64_t seed = 0);

// Self-refining oracle: same eps, fine grid and more paths; the coarse paths
// must be the leading paths of the fine noise.
ErrorComponents estimate_err_n(const BackwardSolution& fine, const ForwardPaths& fine_paths,
                               const BackwardSolution& coarse, const ForwardPaths& coarse_paths,
                               std::uint64_t seed = 0);

// Reference at a smaller cutoff delta; includes the stochastic-integral term
// sup_i E|int V dR - sum Z dW|^2 with V dR built from the reference's Z and U.
ErrorComponents estimate_err_n_eps(const BackwardSolution& reference,
                                   const ForwardPaths& reference_paths,
                                   const BackwardSolution& solution, const ForwardPaths& paths,
                                   std::uint64_t seed = 0);

// Same functional with the eps-solution on the reference's own grid resolution.
ErrorComponents estimate_err_eps(const BackwardSolution& reference,
                                 const ForwardPaths& reference_paths,
                                 const BackwardSolution& solution, const ForwardPaths& paths,
                                 std::uint64_t seed = 0);

struct HolderPoint {
  double gap = 0.0;
  Estimate z_sq;
  Estimate gamma_sq;
};

struct HolderReport {
  std::vector<HolderPoint> points;
  RateFit z_fit;
  RateFit gamma_fit;  // slope is NaN when Gamma does not move
};

// E|Z_{t+h} - Z_t|^2 averaged over all node pairs at each gap (in nodes).
HolderReport holder_probe(const BackwardSolution& solution, const std::vector<int>& gap_nodes,
                          std::uint64_t seed = 0);

// Shared inputs of an experiment.
struct ModelSetup {
  std::shared_ptr<const LevyModel> model;
  CoefficientSet coeffs;
  double x0 = 1.0;
  double T = 1.0;
};

struct ForwardRateConfig {
  std::vector<double> eps;
  int n = 128;
  int refinement = 8;          // reference grid is refinement * n
  double delta_fraction = 0.125;
  Index M = 10000;
  std::uint64_t seed = 1;
  int threads = 1;
  int table_nodes = 4096;
};

struct ForwardRatePoint {
  double eps = 0.0;
  double sigma_eps = 0.0;
  Estimate err;
};

struct ForwardRateResult {
  std::vector<ForwardRatePoint> points;
  RateFit fit;  // against sigma(eps)^2
};

ForwardRateResult run_forward_rates(const ModelSetup& setup, const ForwardRateConfig& cfg);

struct BackwardRateConfig {
  std::vector<int> n;
  std::vector<SchemeKind> schemes;
  double eps = 0.1;
  bool sqrt_schedule = false;  // eps = n^{-1/2}
  Index M = 100000;
  int fine_n = 512;
  Index fine_M = 400000;
  double delta_fraction = 0.125;  // schedule reference cutoff relative to the smallest eps
  SolverOptions solver;
  std::uint64_t seed = 1;
  int threads = 1;
  int table_nodes = 4096;
};

struct BackwardRatePoint {
  SchemeKind scheme = SchemeKind::Euler;
  int n = 0;
  double eps = 0.0;
  double sigma_eps = 0.0;
  ErrorComponents err;
  Estimate y0;
};

struct BackwardRateResult {
  std::vector<BackwardRatePoint> points;
  std::map<SchemeKind, RateFit> fits;  // against n
  Estimate oracle_y0;
  int oracle_n = 0;
  Index oracle_M = 0;
  double oracle_eps = 0.0;
};

// Fixed eps: Err_n against a fine Euler solve on the same noise.
// sqrt schedule: Err_{n,eps} against a delta-refined reference.
BackwardRateResult run_backward_rates(const ModelSetup& setup, const BackwardRateConfig& cfg);

}  // namespace levyfbsde
