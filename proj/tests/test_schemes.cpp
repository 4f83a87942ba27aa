#include <doctest.h>

#include <cmath>
#include <string>

#include "levyfbsde/schemes.hpp"

using namespace levyfbsde;
using Eigen::VectorXd;
using doctest::Approx;

namespace {

std::shared_ptr<const LevyModel> stable(double alpha, RhoSpec rho = {}) {
  return std::make_shared<LevyModel>(LevyFamily::symmetric_stable(alpha), rho);
}

ForwardPaths paths_for(std::shared_ptr<const LevyModel> m, const TruncationView& v,
                       const CoefficientSet& c, int n, Eigen::Index M, std::uint64_t seed, double x0 = 1.0) {
  return simulate_forward(m, v, c, Grid(n), M, {seed, 0, 0.0}, x0);
}

// Y_t = A(t) X_t + B(t) with A = e^{f2 (T-t)} solves the linear equation when X is a
// martingale with unit jump coefficient; Gamma = K A with K the kernel mass.
double linear_y0(double x0, double f1, double f2, double f3, double K) {
  const double a = std::exp(f2);
  return a * x0 + f1 * (a - 1.0) / f2 + f3 * K * a;
}

}  // namespace

TEST_CASE("scheme names") {
  CHECK(parse_scheme("euler") == SchemeKind::Euler);
  CHECK(parse_scheme("malliavin") == SchemeKind::Malliavin);
  CHECK_THROWS(parse_scheme("both"));
  CHECK(to_string(SchemeKind::Malliavin) == "malliavin");
}

TEST_CASE("measurability: stored values are functions of X") {
  auto m = stable(0.9);
  const TruncationView v = make_truncation(*m, 0.1);
  const CoefficientSet c = make_preset("lipschitz_smooth");
  const ForwardPaths p = paths_for(m, v, c, 8, 3000, 1, 0.3);
  for (SchemeKind k : {SchemeKind::Euler, SchemeKind::Malliavin}) {
    const BackwardSolution s = solve(k, p, v, c);
    REQUIRE(s.materialized());
    for (int i = 0; i <= 8; ++i) {
      const NodeValues nv = s.evaluate(i, p.X.col(i));
      CAPTURE(i);
      CHECK((nv.Y - s.Y.col(i)).cwiseAbs().maxCoeff() <= 1e-14);
      CHECK((nv.Z - s.Z.col(i)).cwiseAbs().maxCoeff() <= 1e-14);
      CHECK((nv.Gamma - s.Gamma.col(i)).cwiseAbs().maxCoeff() <= 1e-14);
    }
    // paths sharing X_0 share every node-0 value
    CHECK(s.Y.col(0).maxCoeff() - s.Y.col(0).minCoeff() == 0.0);
  }
}

TEST_CASE("zero generator, identity terminal") {
  auto m = stable(1.1);
  const TruncationView v = make_truncation(*m, 0.1);
  const CoefficientSet c = make_preset("zero_f_identity_g");
  const ForwardPaths p = paths_for(m, v, c, 8, 5000, 2);
  const BackwardSolution mal = solve_malliavin(p, v, c);
  CHECK((mal.Z.array() - v.sigma_eps).abs().maxCoeff() < 1e-12);
  CHECK((mal.U.array() - 1.0).abs().maxCoeff() < 1e-12);
  const BackwardSolution eul = solve_backward_euler(p, v, c);
  for (int i = 0; i < 8; ++i)
    CHECK(std::abs(eul.z_targets[i].value - v.sigma_eps) < 4 * eul.z_targets[i].se);
  CHECK(mal.y0.value == Approx(p.X.col(8).mean()).epsilon(1e-12));
}

TEST_CASE("linear generator against the analytic solution") {
  const double f1 = 0.2, f2 = 0.3, f3 = 0.5, x0 = 1.0;
  auto m = stable(0.8, RhoSpec::constant(0.7));
  const TruncationView v = make_truncation(*m, 0.1);
  const CoefficientSet c = make_preset("linear_bsde", {{"f1", f1}, {"f2", f2}, {"f3", f3}});
  const ForwardPaths p = paths_for(m, v, c, 32, 40000, 3, x0);
  for (GammaConvention g : {GammaConvention::MarkWeighted, GammaConvention::Unweighted}) {
    SolverOptions o;
    o.gamma = g;
    o.materialize = false;
    const double K = gamma_kernel_mass(v, g);
    const double exact = linear_y0(x0, f1, f2, f3, K);
    for (SchemeKind k : {SchemeKind::Euler, SchemeKind::Malliavin}) {
      const BackwardSolution s = solve(k, p, v, c, o);
      CAPTURE(to_string(k));
      CAPTURE(to_string(g));
      // implicit Euler bias is O(dt)
      CHECK(std::abs(s.y0.value - exact) < 4 * s.y0.se + 0.02);
      const double g0 = K * std::exp(f2);
      CHECK(std::abs(s.gamma_targets[0].value - g0) < 4 * s.gamma_targets[0].se + 0.05 * std::abs(g0) + 1e-12);
    }
  }
}

TEST_CASE("implicit step solves its equation") {
  auto m = stable(1.0);
  const TruncationView v = make_truncation(*m, 0.2);
  CoefficientSet c = make_preset("lipschitz_smooth");
  c.name = "nonlinear";
  c.f = [](double, double x, double y, double g) { return -std::sin(y) + 0.1 * g + 0.2 * std::cos(x); };
  c.df_dx = [](double, double x, double, double) { return -0.2 * std::sin(x); };
  c.df_dy = [](double, double, double y, double) { return -std::cos(y); };
  c.df_dgamma = [](double, double, double, double) { return 0.1; };
  c.linear.reset();
  c.x_free = false;
  validate(c);
  const ForwardPaths p = paths_for(m, v, c, 8, 2000, 4, 0.1);
  const BackwardSolution s = solve_backward_euler(p, v, c);
  const double dt = p.grid.dt();
  for (double x : {-1.0, 0.0, 0.7})
    for (double cont : {-0.5, 0.4}) {
      const double y = s.implicit_y(3, x, cont, 0.2);
      CHECK(y - dt * c.f(p.grid.node(3), x, y, 0.2) == Approx(cont).epsilon(1e-12));
    }
  CHECK_THROWS(solve_malliavin(p, v, c));
}

TEST_CASE("solver input errors") {
  auto m = stable(1.0);
  const TruncationView v = make_truncation(*m, 0.1);
  const CoefficientSet c = make_preset("linear_bsde");
  const ForwardPaths p = paths_for(m, v, c, 8, 500, 5);
  CHECK_THROWS(solve_backward_euler(p, make_truncation(*m, 0.2), c));
  const CoefficientSet coupled = make_preset("lipschitz_smooth", {{"x_coupling", 0.5}});
  CHECK_THROWS_WITH(solve_malliavin(p, v, coupled), doctest::Contains("linear"));
  const CoefficientSet huge = make_preset("linear_bsde", {{"f2", 800.0}});
  CHECK_THROWS_WITH(solve_malliavin(p, v, huge), doctest::Contains("overflow"));
}

TEST_CASE("thread count does not change solutions") {
  auto m = stable(1.2);
  const TruncationView v = make_truncation(*m, 0.1);
  const CoefficientSet c = make_preset("linear_bsde", {{"f2", 0.3}, {"f3", 0.4}, {"b_bar", 0.1}});
  const ForwardPaths p = paths_for(m, v, c, 8, 9000, 6);
  for (SchemeKind k : {SchemeKind::Euler, SchemeKind::Malliavin}) {
    SolverOptions a, b;
    b.threads = 3;
    const BackwardSolution s1 = solve(k, p, v, c, a), s3 = solve(k, p, v, c, b);
    CHECK(s1.y0.value == s3.y0.value);
    CHECK(s1.y0.se == s3.y0.se);
    CHECK(s1.Y == s3.Y);
    CHECK(s1.Gamma == s3.Gamma);
  }
}

TEST_CASE("jump-direction quotient blow-up is reported with its location") {
  // the quotient's denominator DX + DY + DGamma can cancel without vanishing
  auto m = stable(1.2);
  const TruncationView v = make_truncation(*m, 0.1);
  const CoefficientSet c = make_preset("lipschitz_smooth");
  const ForwardPaths p = paths_for(m, v, c, 8, 9000, 6);
  std::string msg1, msg3;
  SolverOptions a, b;
  b.threads = 3;
  try { solve_malliavin(p, v, c, a); } catch (const std::runtime_error& e) { msg1 = e.what(); }
  try { solve_malliavin(p, v, c, b); } catch (const std::runtime_error& e) { msg3 = e.what(); }
  CHECK(msg1 == msg3);
  if (!msg1.empty()) {
    CHECK(msg1.find("interval starting at node") != std::string::npos);
    CHECK(msg1.find("path") != std::string::npos);
  }
}

TEST_CASE("weights") {
  auto m = std::make_shared<LevyModel>(LevyFamily::tempered_stable(1.1, 2.0), RhoSpec::cosine(0.5, 2.0));
  const TruncationView v = make_truncation(*m, 0.05);
  SUBCASE("no jump argument: deterministic exponential") {
    const CoefficientSet c = make_preset("linear_bsde", {{"f2", -0.4}, {"f3", 0.0}});
    const ForwardPaths p = paths_for(m, v, c, 10, 200, 7);
    const MalliavinWeights w = build_weights(p, v, c, 2, 9);
    CHECK((w.log_E.array() + 0.4 * 0.7).abs().maxCoeff() < 1e-12);
    CHECK(build_weights(p, v, c, 4, 4).log_E.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("multiplicative in log space") {
    const CoefficientSet c = make_preset("linear_bsde", {{"f2", 0.3}, {"f3", 0.8}});
    const ForwardPaths p = paths_for(m, v, c, 12, 1000, 8);
    const VectorXd a = build_weights(p, v, c, 1, 5).log_E, b = build_weights(p, v, c, 5, 11).log_E;
    CHECK((a + b - build_weights(p, v, c, 1, 11).log_E).cwiseAbs().maxCoeff() < 1e-12);
    // one-step increment matches the closed form
    const VectorXd H = p.jump_sum(5, Moment::RhoMark);
    const VectorXd step = build_weights(p, v, c, 5, 6).log_E;
    for (Eigen::Index r = 0; r < 20; ++r)
      CHECK(step[r] == Approx(log_weight_increment(0.3, 0.8, H[r], v.rho2_m_big, p.grid.dt())).epsilon(1e-13));
    // the exponential has mean one
    CHECK(std::abs(build_weights(p, v, c, 0, 12).E().mean() * std::exp(-0.3) - 1.0) < 0.05);
  }
  SUBCASE("jump direction needs a materialized solution") {
    const CoefficientSet c = make_preset("linear_bsde", {{"f3", 0.5}});
    const ForwardPaths p = paths_for(m, v, c, 6, 300, 9);
    SolverOptions o;
    o.materialize = false;
    const BackwardSolution s = solve_backward_euler(p, v, c, o);
    CHECK_THROWS(build_weights(p, v, c, 2, 5, &s, 1));
    const BackwardSolution mal = solve_malliavin(p, v, c);
    const MalliavinWeights w = build_weights(p, v, c, 2, 5, &mal, 1);
    CHECK(w.alpha.cols() == 3);
    CHECK(w.log_Ee.allFinite());
  }
}
