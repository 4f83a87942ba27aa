#include "levyfbsde/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "levyfbsde/rng.hpp"

namespace levyfbsde {

namespace {

RateFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_rate: scales must not all coincide");
  RateFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - f.intercept - f.slope * x[k];
    ssr += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  return f;
}

double quantile_sorted(const std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  const double w = pos - static_cast<double>(k);
  return k + 1 < v.size() ? (1.0 - w) * v[k] + w * v[k + 1] : v[k];
}

bool same_noise(const ForwardPaths& a, const ForwardPaths& b) {
  return a.noise.seed == b.noise.seed && a.noise.base_steps == b.noise.base_steps &&
         a.noise.jump_floor == b.noise.jump_floor && a.x0 == b.x0 && a.grid.T == b.grid.T;
}

void require_coupled(const ForwardPaths& coarse, const ForwardPaths& fine, const char* who) {
  if (!same_noise(coarse, fine))
    throw std::invalid_argument(std::string(who) +
                                ": inputs are not coupled (seed, Brownian resolution, jump "
                                "floor, x0 and T must agree)");
  if (fine.grid.n % coarse.grid.n != 0)
    throw std::invalid_argument(std::string(who) + ": fine grid is not a refinement of the coarse grid");
  if (fine.paths() < coarse.paths())
    throw std::invalid_argument(std::string(who) + ": reference has fewer paths than the estimate");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) { return splitmix64(seed + 0x51ED27A3ull * (k + 1)); }

// Accumulates per-path contributions as group sums, one column per term.
class GroupedColumns {
 public:
  GroupedColumns(const Bootstrap& boot, Index cols) : boot_(boot), sums_(boot.groups(), cols) {
    sums_.setZero();
  }
  void set(Index col, const Eigen::Ref<const Eigen::VectorXd>& v) {
    for (Index g = 0; g < boot_.groups(); ++g)
      sums_(g, col) = v.segment(boot_.group_begin(g), boot_.group_end(g) - boot_.group_begin(g)).sum();
  }
  const Eigen::MatrixXd& sums() const { return sums_; }

 private:
  const Bootstrap& boot_;
  Eigen::MatrixXd sums_;
};

enum class ErrorKind { SameEps, Reference };

ErrorComponents backward_error(const BackwardSolution& ref, const ForwardPaths& rp,
                               const BackwardSolution& sol, const ForwardPaths& sp, ErrorKind kind,
                               int min_refinement, std::uint64_t seed, const char* who) {
  require_coupled(sp, rp, who);
  if (ref.grid.n != rp.grid.n || sol.grid.n != sp.grid.n)
    throw std::invalid_argument(std::string(who) + ": solution and paths use different grids");
  const bool identical = rp.grid.n == sp.grid.n && rp.paths() == sp.paths();
  if (!identical) {
    if (rp.grid.n < min_refinement * sp.grid.n)
      throw std::invalid_argument(std::string(who) + ": reference grid must be at least " +
                                  std::to_string(min_refinement) + " times finer");
    if (ref.paths < 4 * sp.paths())
      throw std::invalid_argument(std::string(who) + ": reference needs at least 4 times the paths");
  }
  if (kind == ErrorKind::SameEps) {
    if (std::abs(ref.view.eps - sol.view.eps) > 1e-15 * std::max(1.0, sol.view.eps))
      throw std::invalid_argument(std::string(who) + ": mismatched eps (" +
                                  std::to_string(ref.view.eps) + " vs " +
                                  std::to_string(sol.view.eps) + ")");
  } else if (ref.view.eps > sol.view.eps) {
    throw std::invalid_argument(std::string(who) + ": reference cutoff exceeds eps");
  }

  const Index M = sp.paths();
  const int nf = rp.grid.n, nc = sp.grid.n, r = nf / nc;
  const double dtf = rp.grid.dt();
  const Bootstrap boot(M, seed);
  const bool integral = kind == ErrorKind::Reference;
  // columns: Y at every reference node, then Z (one sum or one per coarse node), then Gamma
  const Index zcols = integral ? nc : 1;
  GroupedColumns cols(boot, nf + 1 + zcols + 1);
  const Index zc0 = nf + 1, gcol = nf + 1 + zcols;

  Eigen::VectorXd zsum = Eigen::VectorXd::Zero(M), gsum = Eigen::VectorXd::Zero(M);
  Eigen::VectorXd iref = Eigen::VectorXd::Zero(M), icoarse = Eigen::VectorXd::Zero(M);
  const double gmass = gamma_kernel_mass(sol.view, sol.gamma);
  double band_comp = 0.0;
  if (integral && rp.model) band_comp = rp.model->integrate(Moment::Mark, ref.view.eps, sol.view.eps);

  int cached = -1;
  NodeValues cv;
  for (int s = 0; s <= nf; ++s) {
    const int phi = s / r;
    if (phi != cached) {
      cv = sol.evaluate(phi, sp.X.col(phi));
      cached = phi;
    }
    const NodeValues fv = ref.evaluate(s, rp.X.col(s).head(M));
    cols.set(s, (fv.Y - cv.Y).array().square().matrix());
    if (s == nf) break;
    if (integral) {
      const Eigen::VectorXd dw = rp.brownian_increment(s, M);
      const Eigen::VectorXd band = rp.band_jump_sum(s, ref.view.eps, sol.view.eps, band_comp).head(M);
      iref += fv.Z.cwiseProduct(dw) + fv.U.cwiseProduct(band);
      gsum += dtf * (gmass * fv.U - cv.Gamma).array().square().matrix();
      if ((s + 1) % r == 0) {
        const int i = (s + 1) / r;
        icoarse += cv.Z.cwiseProduct(sp.brownian_increment(i - 1));
        cols.set(zc0 + i - 1, (iref - icoarse).array().square().matrix());
      }
    } else {
      zsum += dtf * (fv.Z - cv.Z).array().square().matrix();
      gsum += dtf * (fv.Gamma - cv.Gamma).array().square().matrix();
    }
  }
  if (!integral) cols.set(zc0, zsum);
  cols.set(gcol, gsum);

  auto parts = [&](const Eigen::VectorXd& m) {
    const double y = m.head(nf + 1).maxCoeff();
    const double z = integral ? m.segment(zc0, zcols).maxCoeff() : m[zc0];
    return std::array<double, 3>{y, z, m[gcol]};
  };
  ErrorComponents out;
  out.total = boot.functional(cols.sums(), [&](const Eigen::VectorXd& m) {
    const auto p = parts(m);
    return std::sqrt(p[0] + p[1] + p[2]);
  });
  const auto p = parts(cols.sums().colwise().sum().transpose() / static_cast<double>(M));
  out.y_term = p[0];
  out.z_term = p[1];
  out.gamma_term = p[2];
  return out;
}

}  // namespace

RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw std::invalid_argument("fit_rate: need at least three points");
  std::vector<double> x, y;
  for (const auto& [h, e] : points) {
    if (!(h > 0.0) || !(e > 0.0) || !std::isfinite(h) || !std::isfinite(e))
      throw std::invalid_argument("fit_rate: scales and errors must be positive and finite");
    x.push_back(std::log(h));
    y.push_back(std::log(e));
  }
  return least_squares(x, y);
}

RateFit fit_rate(const std::vector<std::pair<double, double>>& points,
                 const std::vector<double>& ses, std::uint64_t seed, int resamples) {
  RateFit f = fit_rate(points);
  if (ses.size() != points.size()) throw std::invalid_argument("fit_rate: one SE per point");
  const CounterStream stream(seed, StreamTag::Synthetic);
  std::vector<double> x, slopes;
  for (const auto& pt : points) x.push_back(std::log(pt.first));
  for (int r = 0; r < resamples; ++r) {
    std::vector<double> y;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const double rel = ses[k] / points[k].second;
      const double z = stream.normal_pair(static_cast<std::uint64_t>(r), k)[0];
      y.push_back(std::log(points[k].second) + rel * z);
    }
    slopes.push_back(least_squares(x, y).slope);
  }
  std::sort(slopes.begin(), slopes.end());
  f.slope_lo = quantile_sorted(slopes, 0.025);
  f.slope_hi = quantile_sorted(slopes, 0.975);
  return f;
}

Estimate estimate_err_forward(const ForwardPaths& coarse, const ForwardPaths& reference,
                              std::uint64_t seed) {
  require_coupled(coarse, reference, "estimate_err_forward");
  if (reference.eps > coarse.eps)
    throw std::invalid_argument("estimate_err_forward: reference cutoff exceeds eps");
  const Index M = coarse.paths();
  const int r = reference.grid.n / coarse.grid.n;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(M);
  for (int i = 0; i <= coarse.grid.n; ++i)
    for (Index p = 0; p < M; ++p) {
      const double e = coarse.X(p, i) - reference.X(p, i * r);
      d[p] = std::max(d[p], e * e);
    }
  return Bootstrap(M, seed).mean(d);
}

ErrorComponents estimate_err_n(const BackwardSolution& fine, const ForwardPaths& fine_paths,
                               const BackwardSolution& coarse, const ForwardPaths& coarse_paths,
                               std::uint64_t seed) {
  return backward_error(fine, fine_paths, coarse, coarse_paths, ErrorKind::SameEps, 8, seed,
                        "estimate_err_n");
}

ErrorComponents estimate_err_n_eps(const BackwardSolution& reference,
                                   const ForwardPaths& reference_paths,
                                   const BackwardSolution& solution, const ForwardPaths& paths,
                                   std::uint64_t seed) {
  return backward_error(reference, reference_paths, solution, paths, ErrorKind::Reference, 8, seed,
                        "estimate_err_n_eps");
}

ErrorComponents estimate_err_eps(const BackwardSolution& reference,
                                 const ForwardPaths& reference_paths,
                                 const BackwardSolution& solution, const ForwardPaths& paths,
                                 std::uint64_t seed) {
  return backward_error(reference, reference_paths, solution, paths, ErrorKind::Reference, 1, seed,
                        "estimate_err_eps");
}

HolderReport holder_probe(const BackwardSolution& solution, const std::vector<int>& gap_nodes,
                          std::uint64_t seed) {
  if (!solution.materialized())
    throw std::invalid_argument("holder_probe: solution values were not materialized");
  const int n = solution.grid.n;
  const Index M = solution.paths;
  const Bootstrap boot(M, seed);
  HolderReport rep;
  std::vector<std::pair<double, double>> zp, gp;
  std::vector<double> zse, gse;
  for (int m : gap_nodes) {
    if (m < 1 || m > n) throw std::invalid_argument("holder_probe: gap outside [1, n]");
    Eigen::VectorXd zd = Eigen::VectorXd::Zero(M), gd = Eigen::VectorXd::Zero(M);
    const int pairs = n - m + 1;
    for (int s = 0; s + m <= n; ++s) {
      zd += (solution.Z.col(s + m) - solution.Z.col(s)).array().square().matrix();
      gd += (solution.Gamma.col(s + m) - solution.Gamma.col(s)).array().square().matrix();
    }
    zd /= pairs;
    gd /= pairs;
    HolderPoint pt;
    pt.gap = m * solution.grid.dt();
    pt.z_sq = boot.mean(zd);
    pt.gamma_sq = boot.mean(gd);
    rep.points.push_back(pt);
    zp.emplace_back(pt.gap, pt.z_sq.value);
    gp.emplace_back(pt.gap, pt.gamma_sq.value);
    zse.push_back(pt.z_sq.se);
    gse.push_back(pt.gamma_sq.se);
  }
  auto positive = [](const std::vector<std::pair<double, double>>& v) {
    return std::all_of(v.begin(), v.end(), [](const auto& q) { return q.second > 0.0; });
  };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (positive(zp))
    rep.z_fit = fit_rate(zp, zse, derive_seed(seed, 1));
  else
    rep.z_fit.slope = nan;
  if (positive(gp))
    rep.gamma_fit = fit_rate(gp, gse, derive_seed(seed, 2));
  else
    rep.gamma_fit.slope = nan;
  return rep;
}

ForwardRateResult run_forward_rates(const ModelSetup& setup, const ForwardRateConfig& cfg) {
  if (!(cfg.delta_fraction > 0.0) || cfg.delta_fraction > 0.125)
    throw std::invalid_argument("rates-forward: delta must satisfy delta <= eps/8");
  if (cfg.refinement < 8)
    throw std::invalid_argument("rates-forward: reference grid must be at least 8 times finer");
  ForwardRateResult res;
  std::vector<std::pair<double, double>> pts;
  std::vector<double> ses;
  SimulationOptions opt;
  opt.threads = cfg.threads;
  opt.table_nodes = cfg.table_nodes;
  for (std::size_t k = 0; k < cfg.eps.size(); ++k) {
    const double eps = cfg.eps[k];
    const TruncationView view = make_truncation(*setup.model, eps);
    const double delta = eps * cfg.delta_fraction;
    NoiseSpec noise{cfg.seed, cfg.n * cfg.refinement, std::min(delta, setup.model->e_max())};
    const ForwardPaths coarse = simulate_forward(setup.model, view, setup.coeffs,
                                                 Grid(cfg.n, setup.T), cfg.M, noise, setup.x0, opt);
    const ForwardPaths ref =
        simulate_reference(setup.model, setup.coeffs, Grid(cfg.n * cfg.refinement, setup.T),
                           delta, cfg.M, noise, setup.x0, opt);
    ForwardRatePoint pt{eps, view.sigma_eps, estimate_err_forward(coarse, ref, derive_seed(cfg.seed, k))};
    res.points.push_back(pt);
    pts.emplace_back(view.sigma2(), pt.err.value);
    ses.push_back(pt.err.se);
  }
  res.fit = fit_rate(pts, ses, derive_seed(cfg.seed, 1000));
  return res;
}

BackwardRateResult run_backward_rates(const ModelSetup& setup, const BackwardRateConfig& cfg) {
  if (cfg.n.empty() || cfg.schemes.empty())
    throw std::invalid_argument("rates-backward: need at least one n and one scheme");
  const int n_max = *std::max_element(cfg.n.begin(), cfg.n.end());
  for (int n : cfg.n)
    if (n < 1 || cfg.fine_n % n != 0)
      throw std::invalid_argument("rates-backward: fine_n must be a multiple of every n");
  if (cfg.fine_n < 8 * n_max)
    throw std::invalid_argument("rates-backward: fine_n must be at least 8 times the largest n");
  if (cfg.fine_M < 4 * cfg.M)
    throw std::invalid_argument("rates-backward: fine_M must be at least 4 M");

  SimulationOptions sim;
  sim.threads = cfg.threads;
  sim.table_nodes = cfg.table_nodes;
  SolverOptions solver = cfg.solver;
  solver.threads = cfg.threads;

  auto eps_for = [&](int n) { return cfg.sqrt_schedule ? 1.0 / std::sqrt(static_cast<double>(n)) : cfg.eps; };
  double eps_min = eps_for(cfg.n.front());
  for (int n : cfg.n) eps_min = std::min(eps_min, eps_for(n));
  const double ref_eps = cfg.sqrt_schedule ? eps_min * cfg.delta_fraction : cfg.eps;
  if (cfg.sqrt_schedule && (!(cfg.delta_fraction > 0.0) || cfg.delta_fraction > 0.125))
    throw std::invalid_argument("rates-backward: delta must satisfy delta <= eps/8");

  const NoiseSpec noise{cfg.seed, cfg.fine_n, std::min(ref_eps, setup.model->e_max())};
  const TruncationView ref_view = make_truncation(*setup.model, ref_eps);

  BackwardRateResult res;
  res.oracle_n = cfg.fine_n;
  res.oracle_M = cfg.fine_M;
  res.oracle_eps = ref_eps;

  ForwardPaths fine_paths = simulate_forward(setup.model, ref_view, setup.coeffs,
                                             Grid(cfg.fine_n, setup.T), cfg.fine_M, noise,
                                             setup.x0, sim);
  SolverOptions fine_opt = solver;
  fine_opt.materialize = false;
  fine_opt.bootstrap_seed = derive_seed(cfg.seed, 2000);
  const BackwardSolution fine = solve_backward_euler(fine_paths, ref_view, setup.coeffs, fine_opt);
  res.oracle_y0 = fine.y0;
  fine_paths.truncate(cfg.M);

  std::map<SchemeKind, std::vector<std::pair<double, double>>> pts;
  std::map<SchemeKind, std::vector<double>> ses;
  std::uint64_t k = 0;
  for (int n : cfg.n) {
    const double eps = eps_for(n);
    const TruncationView view = make_truncation(*setup.model, eps);
    const ForwardPaths paths = simulate_forward(setup.model, view, setup.coeffs, Grid(n, setup.T),
                                                cfg.M, noise, setup.x0, sim);
    for (SchemeKind scheme : cfg.schemes) {
      SolverOptions opt = solver;
      opt.materialize = false;
      opt.bootstrap_seed = derive_seed(cfg.seed, 3000 + k);
      const BackwardSolution sol = solve(scheme, paths, view, setup.coeffs, opt);
      BackwardRatePoint pt;
      pt.scheme = scheme;
      pt.n = n;
      pt.eps = eps;
      pt.sigma_eps = view.sigma_eps;
      pt.y0 = sol.y0;
      pt.err = cfg.sqrt_schedule
                   ? estimate_err_n_eps(fine, fine_paths, sol, paths, derive_seed(cfg.seed, k))
                   : estimate_err_n(fine, fine_paths, sol, paths, derive_seed(cfg.seed, k));
      res.points.push_back(pt);
      pts[scheme].emplace_back(static_cast<double>(n), pt.err.total.value);
      ses[scheme].push_back(pt.err.total.se);
      ++k;
    }
  }
  if (cfg.n.size() >= 3)
    for (SchemeKind scheme : cfg.schemes)
      res.fits[scheme] = fit_rate(pts[scheme], ses[scheme],
                                  derive_seed(cfg.seed, 4000 + static_cast<std::uint64_t>(scheme)));
  return res;
}

}  // namespace levyfbsde
