#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levyfbsde/coefficients.hpp"
#include "levyfbsde/forward.hpp"
#include "levyfbsde/levy.hpp"
#include "levyfbsde/regression.hpp"
#include "levyfbsde/stats.hpp"

namespace levyfbsde {

enum class SchemeKind { Euler, Malliavin };

SchemeKind parse_scheme(const std::string& s);
std::string to_string(SchemeKind s);

struct SolverOptions {
  BasisSpec basis;
  GammaConvention gamma = GammaConvention::MarkWeighted;
  bool materialize = true;
  int threads = 1;
  std::uint64_t bootstrap_seed = 0;
};

// Fitted functions of X at one node. For the Euler scheme y is the continuation
// value E[Y_{i+1} | X_i]; for the Malliavin scheme it is Y_i itself.
struct NodeModel {
  CondExpEstimator y, z, gamma, u;
};

struct NodeValues {
  Eigen::VectorXd Y, Z, Gamma, U;
};

class BackwardSolution {
 public:
  SchemeKind scheme = SchemeKind::Euler;
  Grid grid;
  TruncationView view;
  GammaConvention gamma = GammaConvention::MarkWeighted;
  double kernel_mass = 0.0;  // int rho kappa, so that Gamma = kernel_mass * U
  CoefficientSet coeffs;
  Index paths = 0;

  std::vector<NodeModel> nodes;     // nodes 0..n-1
  Eigen::MatrixXd Y, Z, Gamma, U;   // M x (n+1), empty unless materialized
  Eigen::VectorXd pathwise_y0;      // per-path terms whose mean is Y_0
  std::vector<Estimate> z_targets;  // mean and SE of the regression targets per node
  std::vector<Estimate> gamma_targets;
  std::vector<Estimate> u_targets;
  Estimate y0;

  bool materialized() const { return Y.size() > 0; }

  // Values at node i for arbitrary states; node n uses the terminal formulas.
  NodeValues evaluate(int node, const Eigen::Ref<const Eigen::VectorXd>& x) const;

  struct Theta {
    Eigen::VectorXd X, Y, Gamma;
  };
  Theta theta(int node, const ForwardPaths& paths) const;

  // Euler only: solves y = c + dt f(t_i, x, y, gamma).
  double implicit_y(int node, double x, double continuation, double gamma_value) const;
};

BackwardSolution solve_backward_euler(const ForwardPaths& paths, const TruncationView& view,
                                      const CoefficientSet& coeffs,
                                      const SolverOptions& options = {});

// The derivative paths D_{t_i} X and D_{t_i,e} X are generated internally with
// the same recursions as propagate_malliavin_w / propagate_malliavin_jump.
BackwardSolution solve_malliavin(const ForwardPaths& paths, const TruncationView& view,
                                 const CoefficientSet& coeffs,
                                 const SolverOptions& options = {});

BackwardSolution solve(SchemeKind scheme, const ForwardPaths& paths, const TruncationView& view,
                       const CoefficientSet& coeffs, const SolverOptions& options = {});

struct MalliavinWeights {
  int i = 0, j = 0, theta = -1;
  Eigen::VectorXd log_E;   // log E(t_i, t_j) per path
  Eigen::VectorXd log_Ee;  // log E^e(t_i, t_j) for the jump direction at t_theta
  Eigen::MatrixXd alpha;   // M x (j - i), alpha at nodes i..j-1

  Eigen::VectorXd E() const { return log_E.array().exp(); }
  Eigen::VectorXd Ee() const { return log_Ee.array().exp(); }
};

// Log increment of a Doleans weight over one interval with slope a in the
// generator's y-argument (dy) and c in the jump argument, jump sum H.
inline double log_weight_increment(double dy, double c, double H, double rho2_m, double dt) {
  return (dy - 0.5 * c * c * rho2_m) * dt + c * H;
}

// Weights between nodes i <= j. With a solution and theta >= 0, also the jump
// direction weights and alpha for D_{t_theta, e}. The solution's convention
// overrides `gamma`.
MalliavinWeights build_weights(const ForwardPaths& paths, const TruncationView& view,
                               const CoefficientSet& coeffs, int i, int j,
                               const BackwardSolution* solution = nullptr, int theta = -1,
                               GammaConvention gamma = GammaConvention::MarkWeighted);

}  // namespace levyfbsde
