#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levyfbsde/coefficients.hpp"
#include "levyfbsde/levy.hpp"

namespace levyfbsde {

using Eigen::Index;

struct Grid {
  int n = 1;
  double T = 1.0;

  Grid() = default;
  Grid(int n, double T = 1.0);

  double dt() const { return T / n; }
  double node(int i) const { return i == n ? T : i * dt(); }
  // Index of max{t_i <= t}.
  int phi(double t) const;
};

// Everything that fixes the random inputs. Two simulations sharing a NoiseSpec
// are driven by the same Brownian motion and the same jump sequence.
struct NoiseSpec {
  std::uint64_t seed = 1;
  int base_steps = 0;       // Brownian resolution on [0,T]; 0 means the grid's n
  double jump_floor = 0.0;  // jumps are drawn above this cutoff; 0 means eps
};

struct SimulationOptions {
  int threads = 1;
  int table_nodes = 4096;
};

class ForwardPaths {
 public:
  Grid grid;
  double x0 = 0.0;
  double eps = 0.0;
  double sigma_eps = 0.0;
  NoiseSpec noise;
  std::shared_ptr<const LevyModel> model;
  TruncationView view;
  bool exact_jump_times = false;
  int threads = 1;

  Eigen::MatrixXd X;                  // M x (n+1)
  std::vector<Index> jump_offsets;    // per path, into jumps
  std::vector<JumpEvent> jumps;       // |mark| > eps, ascending in time per path
  std::map<int, Eigen::MatrixXd> DX;  // D_{t_j} X, keyed by j
  std::map<int, Eigen::MatrixXd> DXe; // D_{t_j,e} X, keyed by j

  Index paths() const { return X.rows(); }
  int steps() const { return grid.n; }

  // Increment of W over (t_i, t_{i+1}], one entry per path.
  // Only the leading `rows` paths when rows >= 0.
  Eigen::VectorXd brownian_increment(int i, Index rows = -1) const;
  Eigen::MatrixXd brownian_increments() const;  // M x n

  // Sum of kernel(e) over jumps in (t_i, t_{i+1}] minus dt * int_{E_eps} kernel nu.
  Eigen::VectorXd jump_sum(int i, Moment kernel) const;
  Eigen::MatrixXd jump_sums(Moment kernel) const;  // M x n
  // Compensated sum of marks with lo < |e| <= hi over interval i.
  Eigen::VectorXd band_jump_sum(int i, double lo, double hi, double compensator) const;

  // Drop every path with index >= rows.
  void truncate(Index rows);
  void index_jumps();

 private:
  std::vector<Index> interval_offsets_;  // CSR over intervals
  std::vector<std::pair<Index, double>> interval_jumps_;
  std::map<Moment, double> compensators_;
};

// Euler paths of the eps-truncated system driven by sigma(eps) W and the big jumps.
ForwardPaths simulate_forward(std::shared_ptr<const LevyModel> model, const TruncationView& view,
                              const CoefficientSet& coeffs, const Grid& grid, Index M,
                              const NoiseSpec& noise, double x0,
                              const SimulationOptions& options = {});

// Near-exact paths with jumps above delta at their exact times and sigma(delta) W
// for the rest, on a fine grid. Shares noise with any simulation using `noise`.
ForwardPaths simulate_reference(std::shared_ptr<const LevyModel> model,
                                const CoefficientSet& coeffs, const Grid& grid_fine,
                                double delta, Index M, const NoiseSpec& noise, double x0,
                                const SimulationOptions& options = {});

void propagate_malliavin_w(ForwardPaths& paths, const CoefficientSet& coeffs, int theta_index);
void propagate_malliavin_jump(ForwardPaths& paths, const CoefficientSet& coeffs, int theta_index);

// Flat little-endian dump with a 64-byte header.
void write_paths(const std::string& file, const ForwardPaths& paths);
ForwardPaths read_paths(const std::string& file, std::shared_ptr<const LevyModel> model);

}  // namespace levyfbsde
