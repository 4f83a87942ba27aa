#include <doctest.h>

#include <cmath>
#include <map>
#include <stdexcept>

#include "levyfbsde/harness.hpp"

using namespace levyfbsde;
using doctest::Approx;

namespace {

ModelSetup setup(double alpha, const CoefficientSet& c, double x0 = 1.0) {
  ModelSetup s;
  s.model = std::make_shared<LevyModel>(LevyFamily::symmetric_stable(alpha));
  s.coeffs = c;
  s.x0 = x0;
  return s;
}

}  // namespace

TEST_CASE("rate fit on exact power laws") {
  std::vector<std::pair<double, double>> pts;
  for (double h : {0.5, 0.25, 0.125, 0.0625}) pts.push_back({h, 3.0 * std::pow(h, 1.5)});
  const RateFit f = fit_rate(pts);
  CHECK(f.slope == Approx(1.5).epsilon(1e-12));
  CHECK(std::exp(f.intercept) == Approx(3.0).epsilon(1e-12));
  CHECK(f.r2 == Approx(1.0).epsilon(1e-12));
  CHECK(std::isnan(f.slope_lo));
}

TEST_CASE("rate fit slope equals the direct least squares formula") {
  const std::vector<std::pair<double, double>> pts = {{1.0, 0.9}, {2.0, 2.3}, {4.0, 3.5}, {8.0, 9.0}, {16.0, 15.0}};
  double mx = 0, my = 0;
  for (auto [h, e] : pts) {
    mx += std::log(h) / 5;
    my += std::log(e) / 5;
  }
  double sxy = 0, sxx = 0;
  for (auto [h, e] : pts) {
    sxy += (std::log(h) - mx) * (std::log(e) - my);
    sxx += (std::log(h) - mx) * (std::log(h) - mx);
  }
  const RateFit f = fit_rate(pts);
  CHECK(f.slope == Approx(sxy / sxx).epsilon(1e-12));
  CHECK(f.intercept == Approx(my - sxy / sxx * mx).epsilon(1e-12));
}

TEST_CASE("rate fit interval") {
  const std::vector<std::pair<double, double>> pts = {{0.5, 0.51}, {0.25, 0.24}, {0.125, 0.126}, {0.0625, 0.061}};
  const std::vector<double> ses = {0.01, 0.005, 0.002, 0.001};
  const RateFit a = fit_rate(pts, ses, 7), b = fit_rate(pts, ses, 7);
  CHECK(a.slope_lo < a.slope);
  CHECK(a.slope < a.slope_hi);
  CHECK(a.slope_hi - a.slope_lo < 0.2);
  CHECK(a.slope_lo == b.slope_lo);
  CHECK(fit_rate(pts, std::vector<double>(4, 0.0), 7).slope_lo == Approx(a.slope));

  CHECK_THROWS(fit_rate({{1.0, 1.0}, {2.0, 2.0}}));
  CHECK_THROWS(fit_rate({{1.0, 1.0}, {1.0, 2.0}, {1.0, 3.0}}));
  CHECK_THROWS(fit_rate({{1.0, 1.0}, {2.0, -2.0}, {3.0, 3.0}}));
  CHECK_THROWS(fit_rate(pts, {0.1}, 7));
}

TEST_CASE("identical inputs have zero error") {
  auto m = std::make_shared<LevyModel>(LevyFamily::symmetric_stable(0.8));
  const TruncationView v = make_truncation(*m, 0.2);
  const CoefficientSet c = make_preset("linear_bsde");
  const ForwardPaths p = simulate_forward(m, v, c, Grid(8), 500, {3, 0, 0.0}, 1.0);
  const BackwardSolution s = solve_backward_euler(p, v, c);
  const ErrorComponents e = estimate_err_n(s, p, s, p);
  CHECK(e.total.value == 0.0);
  CHECK(e.y_term == 0.0);
  CHECK(e.z_term == 0.0);
  CHECK(e.gamma_term == 0.0);
}

TEST_CASE("error functionals reject unsuitable inputs") {
  auto m = std::make_shared<LevyModel>(LevyFamily::symmetric_stable(0.8));
  const TruncationView v = make_truncation(*m, 0.2);
  const CoefficientSet c = make_preset("linear_bsde");
  const NoiseSpec shared{3, 64, 0.2};
  const ForwardPaths coarse = simulate_forward(m, v, c, Grid(8), 400, shared, 1.0);
  const BackwardSolution sc = solve_backward_euler(coarse, v, c);

  const ForwardPaths few = simulate_forward(m, v, c, Grid(64), 800, shared, 1.0);
  CHECK_THROWS_WITH(estimate_err_n(solve_backward_euler(few, v, c), few, sc, coarse), doctest::Contains("4 times"));

  const ForwardPaths other = simulate_forward(m, v, c, Grid(64), 1600, {4, 64, 0.2}, 1.0);
  CHECK_THROWS_WITH(estimate_err_n(solve_backward_euler(other, v, c), other, sc, coarse),
                    doctest::Contains("not coupled"));

  const ForwardPaths c8 = simulate_forward(m, v, c, Grid(8), 400, {3, 48, 0.2}, 1.0);
  const ForwardPaths f12 = simulate_forward(m, v, c, Grid(12), 1600, {3, 48, 0.2}, 1.0);
  CHECK_THROWS_WITH(estimate_err_forward(c8, f12), doctest::Contains("refinement"));

  const ForwardPaths wide = simulate_reference(m, c, Grid(64), 0.4, 1600, shared, 1.0);
  CHECK_THROWS_WITH(estimate_err_forward(coarse, wide), doctest::Contains("cutoff"));
}

TEST_CASE("forward error decays like sigma(eps)^2") {
  const ModelSetup s = setup(0.5, make_preset("lipschitz_smooth"), 0.5);
  ForwardRateConfig cfg;
  cfg.eps = {0.4, 0.2, 0.1};
  cfg.n = 16;
  cfg.M = 4000;
  cfg.seed = 11;
  const ForwardRateResult r = run_forward_rates(s, cfg);
  REQUIRE(r.points.size() == 3);
  for (std::size_t k = 1; k < 3; ++k) CHECK(r.points[k].err.value < r.points[k - 1].err.value);
  CHECK(r.fit.slope > 0.7);
  CHECK(r.fit.slope < 1.3);
  CHECK(r.fit.slope_lo <= r.fit.slope);

  cfg.delta_fraction = 0.5;
  CHECK_THROWS_WITH(run_forward_rates(s, cfg), doctest::Contains("eps/8"));
}

TEST_CASE("holder probe on a deterministic Z") {
  // f3 = 0 makes the Malliavin Z a deterministic function of time
  auto m = std::make_shared<LevyModel>(LevyFamily::symmetric_stable(0.8));
  const TruncationView v = make_truncation(*m, 0.2);
  const CoefficientSet c = make_preset("linear_bsde", {{"f2", 0.8}});
  const ForwardPaths p = simulate_forward(m, v, c, Grid(32), 2000, {5, 0, 0.0}, 1.0);
  const BackwardSolution s = solve_malliavin(p, v, c);
  const HolderReport h = holder_probe(s, {8, 4, 2});
  REQUIRE(h.points.size() == 3);
  CHECK(h.points[0].gap == Approx(0.25));
  CHECK(h.z_fit.slope == Approx(2.0).epsilon(0.05));

  SolverOptions lean;
  lean.materialize = false;
  CHECK_THROWS_WITH(holder_probe(solve_malliavin(p, v, c, lean), {2}), doctest::Contains("materialized"));
  CHECK_THROWS(holder_probe(s, {33}));
}

TEST_CASE("backward rates on a small problem") {
  const ModelSetup s = setup(0.8, make_preset("linear_bsde", {{"f3", 0.3}}));
  BackwardRateConfig cfg;
  cfg.n = {4, 8, 16};
  cfg.schemes = {SchemeKind::Euler, SchemeKind::Malliavin};
  cfg.eps = 0.2;
  cfg.M = 2000;
  cfg.fine_n = 128;
  cfg.fine_M = 8000;
  cfg.seed = 3;
  const BackwardRateResult r = run_backward_rates(s, cfg);
  CHECK(r.points.size() == 6);
  CHECK(r.fits.size() == 2);
  CHECK(r.oracle_n == 128);
  CHECK(r.oracle_M == 8000);
  CHECK(r.oracle_eps == 0.2);
  for (const auto& pt : r.points) {
    CHECK(std::isfinite(pt.err.total.value));
    CHECK(pt.err.total.se >= 0.0);
    CHECK(std::abs(pt.y0.value - r.oracle_y0.value) < 0.5);
  }
  std::map<int, double> euler;
  for (const auto& pt : r.points)
    if (pt.scheme == SchemeKind::Euler) euler[pt.n] = pt.err.total.value;
  CHECK(euler.at(16) < euler.at(4));

  cfg.fine_n = 100;
  CHECK_THROWS_WITH(run_backward_rates(s, cfg), doctest::Contains("multiple"));
  cfg.fine_n = 128;
  cfg.fine_M = 4000;
  CHECK_THROWS_WITH(run_backward_rates(s, cfg), doctest::Contains("4 M"));
}
