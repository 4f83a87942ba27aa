#include "levyfbsde/forward.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "levyfbsde/parallel.hpp"

namespace levyfbsde {

namespace {

// Standard normal number s of path p in the Brownian stream.
inline double base_normal(const CounterStream& s, Index p, std::int64_t step) {
  return s.normal_pair(static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(step) / 2)
      [static_cast<std::size_t>(step & 1)];
}

// Sum of normals for base steps [first, first+count).
double normal_sum(const CounterStream& s, Index p, std::int64_t first, std::int64_t count) {
  double acc = 0.0;
  std::int64_t k = first;
  const std::int64_t end = first + count;
  if (k < end && (k & 1)) acc += base_normal(s, p, k++);
  for (; k + 1 < end; k += 2) {
    const auto z = s.normal_pair(static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(k) / 2);
    acc += z[0] + z[1];
  }
  if (k < end) acc += base_normal(s, p, k);
  return acc;
}

int interval_of(double time, const Grid& grid) {
  const int i = static_cast<int>(std::ceil(time / grid.dt())) - 1;
  return std::clamp(i, 0, grid.n - 1);
}

NoiseSpec resolve(NoiseSpec noise, const Grid& grid, double cutoff) {
  if (noise.base_steps == 0) noise.base_steps = grid.n;
  if (noise.jump_floor == 0.0) noise.jump_floor = cutoff;
  if (noise.base_steps % grid.n != 0)
    throw std::invalid_argument("forward: Brownian base resolution " +
                                std::to_string(noise.base_steps) + " is not a multiple of n = " +
                                std::to_string(grid.n));
  if (!(noise.jump_floor > 0.0) || noise.jump_floor > cutoff)
    throw std::invalid_argument("forward: jump floor must lie in (0, cutoff]");
  return noise;
}

[[noreturn]] void non_finite(Index p, int step) {
  std::ostringstream os;
  os << "forward: non-finite state on path " << p << " at step " << step;
  throw std::runtime_error(os.str());
}

// Assembles per-block jump lists in block order.
void merge_jumps(ForwardPaths& out, std::vector<std::vector<JumpEvent>>& block_jumps,
                 std::vector<std::vector<Index>>& block_counts) {
  const Index M = out.paths();
  out.jump_offsets.assign(M + 1, 0);
  Index p = 0;
  for (auto& counts : block_counts)
    for (Index c : counts) {
      out.jump_offsets[p + 1] = out.jump_offsets[p] + c;
      ++p;
    }
  out.jumps.clear();
  out.jumps.reserve(out.jump_offsets[M]);
  for (auto& v : block_jumps) out.jumps.insert(out.jumps.end(), v.begin(), v.end());
}

}  // namespace

Grid::Grid(int n_, double T_) : n(n_), T(T_) {
  if (n_ < 1) throw std::invalid_argument("grid: n must be positive");
  if (!(T_ > 0.0) || !std::isfinite(T_)) throw std::invalid_argument("grid: T must be positive");
}

int Grid::phi(double t) const {
  if (t < 0.0 || t > T) throw std::out_of_range("grid: time outside [0,T]");
  if (t >= T) return n;
  int i = static_cast<int>(std::floor(t / dt()));
  if (node(i + 1) <= t) ++i;
  return std::min(i, n);
}

Eigen::VectorXd ForwardPaths::brownian_increment(int i, Index rows) const {
  if (i < 0 || i >= grid.n) throw std::out_of_range("brownian_increment: bad interval");
  const CounterStream stream(noise.seed, StreamTag::Brownian);
  const std::int64_t r = noise.base_steps / grid.n;
  const double scale = std::sqrt(grid.T / noise.base_steps);
  const Index m = rows < 0 ? paths() : std::min(rows, paths());
  Eigen::VectorXd out(m);
  parallel_blocks(m, threads, [&](std::int64_t, std::int64_t b, std::int64_t e) {
    for (Index p = b; p < e; ++p) out[p] = scale * normal_sum(stream, p, i * r, r);
  });
  return out;
}

Eigen::MatrixXd ForwardPaths::brownian_increments() const {
  Eigen::MatrixXd out(paths(), grid.n);
  for (int i = 0; i < grid.n; ++i) out.col(i) = brownian_increment(i);
  return out;
}

void ForwardPaths::index_jumps() {
  const int n = grid.n;
  interval_offsets_.assign(n + 1, 0);
  for (const auto& j : jumps) ++interval_offsets_[interval_of(j.time, grid) + 1];
  for (int i = 0; i < n; ++i) interval_offsets_[i + 1] += interval_offsets_[i];
  interval_jumps_.assign(jumps.size(), {0, 0.0});
  std::vector<Index> fill(interval_offsets_.begin(), interval_offsets_.end() - 1);
  for (Index p = 0; p < paths(); ++p)
    for (Index k = jump_offsets[p]; k < jump_offsets[p + 1]; ++k) {
      const int i = interval_of(jumps[k].time, grid);
      interval_jumps_[fill[i]++] = {p, jumps[k].mark};
    }
  compensators_.clear();
  for (Moment m : {Moment::Mark, Moment::Rho, Moment::RhoMark})
    compensators_[m] = model ? model->integrate(m, eps, model->e_max()) : 0.0;
}

Eigen::VectorXd ForwardPaths::jump_sum(int i, Moment kernel) const {
  if (i < 0 || i >= grid.n) throw std::out_of_range("jump_sum: bad interval");
  auto c = compensators_.find(kernel);
  const double comp = c != compensators_.end() ? c->second
                                               : model->integrate(kernel, eps, model->e_max());
  Eigen::VectorXd out = Eigen::VectorXd::Constant(paths(), -grid.dt() * comp);
  for (Index k = interval_offsets_[i]; k < interval_offsets_[i + 1]; ++k) {
    const auto& [p, mark] = interval_jumps_[k];
    out[p] += kernel == Moment::Mark ? mark : model->kernel(kernel, mark);
  }
  return out;
}

Eigen::MatrixXd ForwardPaths::jump_sums(Moment kernel) const {
  Eigen::MatrixXd out(paths(), grid.n);
  for (int i = 0; i < grid.n; ++i) out.col(i) = jump_sum(i, kernel);
  return out;
}

Eigen::VectorXd ForwardPaths::band_jump_sum(int i, double lo, double hi,
                                            double compensator) const {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(paths(), -grid.dt() * compensator);
  for (Index k = interval_offsets_[i]; k < interval_offsets_[i + 1]; ++k) {
    const auto& [p, mark] = interval_jumps_[k];
    const double a = std::abs(mark);
    if (a > lo && a <= hi) out[p] += mark;
  }
  return out;
}

void ForwardPaths::truncate(Index rows) {
  if (rows >= paths()) return;
  X.conservativeResize(rows, Eigen::NoChange);
  for (auto& [k, d] : DX) d.conservativeResize(rows, Eigen::NoChange);
  for (auto& [k, d] : DXe) d.conservativeResize(rows, Eigen::NoChange);
  jumps.resize(jump_offsets[rows]);
  jump_offsets.resize(rows + 1);
  index_jumps();
}

ForwardPaths simulate_forward(std::shared_ptr<const LevyModel> model, const TruncationView& view,
                              const CoefficientSet& coeffs, const Grid& grid, Index M,
                              const NoiseSpec& noise_in, double x0,
                              const SimulationOptions& options) {
  if (M < 1) throw std::invalid_argument("simulate_forward: M must be at least 1");
  if (!model) throw std::invalid_argument("simulate_forward: missing model");
  ForwardPaths out;
  out.grid = grid;
  out.x0 = x0;
  out.eps = view.eps;
  out.sigma_eps = view.sigma_eps;
  out.noise = resolve(noise_in, grid, std::min(view.eps, model->e_max()));
  out.model = model;
  out.view = view;
  out.threads = options.threads;
  out.X.resize(M, grid.n + 1);

  const JumpSampler sampler(*model, out.noise.jump_floor, options.table_nodes);
  const CounterStream brownian(out.noise.seed, StreamTag::Brownian);
  const CounterStream jump_stream(out.noise.seed, StreamTag::Jumps);
  const int n = grid.n;
  const double dt = grid.dt();
  const std::int64_t r = out.noise.base_steps / n;
  const double wscale = std::sqrt(grid.T / out.noise.base_steps);
  const double comp = dt * view.e_nu_big;
  const double sigma = view.sigma_eps;

  const std::int64_t nb = block_count(M);
  std::vector<std::vector<JumpEvent>> block_jumps(nb);
  std::vector<std::vector<Index>> block_counts(nb);
  parallel_blocks(M, options.threads, [&](std::int64_t blk, std::int64_t b, std::int64_t e) {
    std::vector<double> jsum(n);
    for (Index p = b; p < e; ++p) {
      std::fill(jsum.begin(), jsum.end(), 0.0);
      Index kept = 0;
      for (const auto& ev : sampler.sample(grid.T, jump_stream, p)) {
        if (std::abs(ev.mark) <= view.eps) continue;
        jsum[interval_of(ev.time, grid)] += ev.mark;
        block_jumps[blk].push_back(ev);
        ++kept;
      }
      block_counts[blk].push_back(kept);
      double x = x0;
      out.X(p, 0) = x;
      for (int i = 0; i < n; ++i) {
        const double dw = wscale * normal_sum(brownian, p, i * r, r);
        const double be = coeffs.beta(x);
        x += coeffs.b(x) * dt + sigma * be * dw + be * (jsum[i] - comp);
        if (!std::isfinite(x)) non_finite(p, i + 1);
        out.X(p, i + 1) = x;
      }
    }
  });
  merge_jumps(out, block_jumps, block_counts);
  out.index_jumps();
  return out;
}

ForwardPaths simulate_reference(std::shared_ptr<const LevyModel> model,
                                const CoefficientSet& coeffs, const Grid& grid_fine,
                                double delta, Index M, const NoiseSpec& noise_in, double x0,
                                const SimulationOptions& options) {
  if (M < 1) throw std::invalid_argument("simulate_reference: M must be at least 1");
  if (!model) throw std::invalid_argument("simulate_reference: missing model");
  if (!(delta > 0.0)) throw std::invalid_argument("simulate_reference: delta must be positive");
  const TruncationView view = make_truncation(*model, delta);
  ForwardPaths out;
  out.grid = grid_fine;
  out.x0 = x0;
  out.eps = delta;
  out.sigma_eps = view.sigma_eps;
  out.noise = resolve(noise_in, grid_fine, std::min(delta, model->e_max()));
  out.model = model;
  out.view = view;
  out.exact_jump_times = true;
  out.threads = options.threads;
  out.X.resize(M, grid_fine.n + 1);

  const JumpSampler sampler(*model, out.noise.jump_floor, options.table_nodes);
  const CounterStream brownian(out.noise.seed, StreamTag::Brownian);
  const CounterStream jump_stream(out.noise.seed, StreamTag::Jumps);
  const CounterStream bridge(out.noise.seed, StreamTag::Bridge);
  const int n = grid_fine.n;
  const std::int64_t r = out.noise.base_steps / n;
  const double wscale = std::sqrt(grid_fine.T / out.noise.base_steps);
  const double cdrift = view.e_nu_big;
  const double sigma = view.sigma_eps;

  const std::int64_t nb = block_count(M);
  std::vector<std::vector<JumpEvent>> block_jumps(nb);
  std::vector<std::vector<Index>> block_counts(nb);
  parallel_blocks(M, options.threads, [&](std::int64_t blk, std::int64_t b, std::int64_t e) {
    std::vector<JumpEvent> evs;
    for (Index p = b; p < e; ++p) {
      evs.clear();
      for (const auto& ev : sampler.sample(grid_fine.T, jump_stream, p))
        if (std::abs(ev.mark) > delta) evs.push_back(ev);
      block_jumps[blk].insert(block_jumps[blk].end(), evs.begin(), evs.end());
      block_counts[blk].push_back(static_cast<Index>(evs.size()));

      double x = x0;
      out.X(p, 0) = x;
      std::size_t k = 0;
      for (int i = 0; i < n; ++i) {
        const double t_end = grid_fine.node(i + 1);
        double u = grid_fine.node(i);
        double remaining = wscale * normal_sum(brownian, p, i * r, r);
        auto advance = [&](double to, double dw) {
          const double be = coeffs.beta(x);
          x += coeffs.b(x) * (to - u) + sigma * be * dw - be * cdrift * (to - u);
        };
        while (k < evs.size() && interval_of(evs[k].time, grid_fine) == i) {
          const double tau = evs[k].time;
          // Brownian bridge from (u, 0) to (t_end, remaining) evaluated at tau.
          const double span = t_end - u;
          double dw = 0.0;
          if (span > 0.0) {
            const double w = (tau - u) / span;
            const double sd = std::sqrt(std::max(0.0, (tau - u) * (t_end - tau) / span));
            const auto z = bridge.normal_pair(static_cast<std::uint64_t>(p), k);
            dw = w * remaining + sd * z[0];
          }
          advance(tau, dw);
          remaining -= dw;
          u = tau;
          x += coeffs.beta(x) * evs[k].mark;
          ++k;
        }
        advance(t_end, remaining);
        if (!std::isfinite(x)) non_finite(p, i + 1);
        out.X(p, i + 1) = x;
      }
    }
  });
  merge_jumps(out, block_jumps, block_counts);
  out.index_jumps();
  return out;
}

void propagate_malliavin_w(ForwardPaths& paths, const CoefficientSet& coeffs, int theta_index) {
  const int n = paths.grid.n;
  if (theta_index < 0 || theta_index > n)
    throw std::out_of_range("propagate_malliavin_w: theta index outside [0,n]");
  const Index M = paths.paths();
  const double dt = paths.grid.dt();
  const double sigma = paths.sigma_eps;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(M, n + 1);
  for (Index p = 0; p < M; ++p) D(p, theta_index) = sigma * coeffs.beta(paths.X(p, theta_index));
  for (int i = theta_index; i < n; ++i) {
    const Eigen::VectorXd dw = paths.brownian_increment(i);
    const Eigen::VectorXd J = paths.jump_sum(i, Moment::Mark);
    for (Index p = 0; p < M; ++p) {
      const double x = paths.X(p, i);
      const double fac =
          1.0 + coeffs.db(x) * dt + sigma * coeffs.dbeta(x) * dw[p] + coeffs.dbeta(x) * J[p];
      D(p, i + 1) = D(p, i) * fac;
      if (!std::isfinite(D(p, i + 1))) non_finite(p, i + 1);
    }
  }
  paths.DX[theta_index] = std::move(D);
}

void propagate_malliavin_jump(ForwardPaths& paths, const CoefficientSet& coeffs,
                              int theta_index) {
  const int n = paths.grid.n;
  if (theta_index < 0 || theta_index > n)
    throw std::out_of_range("propagate_malliavin_jump: theta index outside [0,n]");
  const Index M = paths.paths();
  const double dt = paths.grid.dt();
  const double sigma = paths.sigma_eps;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(M, n + 1);
  Eigen::VectorXd shifted(M);
  for (Index p = 0; p < M; ++p) {
    const double x = paths.X(p, theta_index);
    shifted[p] = x + coeffs.beta(x);
    D(p, theta_index) = shifted[p] - x;
  }
  for (int i = theta_index; i < n; ++i) {
    const Eigen::VectorXd dw = paths.brownian_increment(i);
    const Eigen::VectorXd J = paths.jump_sum(i, Moment::Mark);
    for (Index p = 0; p < M; ++p) {
      const double y = shifted[p];
      const double be = coeffs.beta(y);
      shifted[p] = y + coeffs.b(y) * dt + sigma * be * dw[p] + be * J[p];
      D(p, i + 1) = shifted[p] - paths.X(p, i + 1);
      if (!std::isfinite(D(p, i + 1))) non_finite(p, i + 1);
    }
  }
  paths.DXe[theta_index] = std::move(D);
}

namespace {

constexpr char kMagic[8] = {'L', 'V', 'F', 'B', 'P', 'A', 'T', 'H'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  static_assert(sizeof(T) == 8 || sizeof(T) == 4);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("read_paths: truncated file");
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

}  // namespace

void write_paths(const std::string& file, const ForwardPaths& paths) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("write_paths: cannot open " + file);
  os.write(kMagic, 8);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, paths.exact_jump_times ? 1u : 0u);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(paths.paths()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(paths.grid.n));
  put<double>(os, paths.eps);
  put<std::uint64_t>(os, paths.noise.seed);
  put<double>(os, paths.grid.T);
  put<double>(os, paths.x0);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(paths.noise.base_steps));
  put<double>(os, paths.noise.jump_floor);
  for (Index i = 0; i < paths.X.size(); ++i) put<double>(os, paths.X.data()[i]);
  put<std::uint64_t>(os, paths.jumps.size());
  for (Index o : paths.jump_offsets) put<std::uint64_t>(os, static_cast<std::uint64_t>(o));
  for (const auto& j : paths.jumps) {
    put<double>(os, j.time);
    put<double>(os, j.mark);
  }
  if (!os) throw std::runtime_error("write_paths: write failed for " + file);
}

ForwardPaths read_paths(const std::string& file, std::shared_ptr<const LevyModel> model) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("read_paths: cannot open " + file);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("read_paths: bad magic in " + file);
  if (get<std::uint32_t>(is) != kVersion) throw std::runtime_error("read_paths: bad version");
  ForwardPaths out;
  out.exact_jump_times = get<std::uint32_t>(is) != 0;
  const auto M = static_cast<Index>(get<std::uint64_t>(is));
  const int n = static_cast<int>(get<std::uint64_t>(is));
  out.eps = get<double>(is);
  out.noise.seed = get<std::uint64_t>(is);
  const double T = get<double>(is);
  out.x0 = get<double>(is);
  out.noise.base_steps = static_cast<int>(get<std::uint64_t>(is));
  out.noise.jump_floor = get<double>(is);
  out.grid = Grid(n, T);
  out.model = model;
  if (model) {
    out.view = make_truncation(*model, out.eps);
    out.sigma_eps = out.view.sigma_eps;
  }
  out.X.resize(M, n + 1);
  for (Index i = 0; i < out.X.size(); ++i) out.X.data()[i] = get<double>(is);
  const auto count = get<std::uint64_t>(is);
  out.jump_offsets.resize(M + 1);
  for (auto& o : out.jump_offsets) o = static_cast<Index>(get<std::uint64_t>(is));
  out.jumps.resize(count);
  for (auto& j : out.jumps) {
    j.time = get<double>(is);
    j.mark = get<double>(is);
  }
  out.index_jumps();
  return out;
}

}  // namespace levyfbsde
