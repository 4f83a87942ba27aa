#include <doctest.h>

#include <cmath>

#include "levyfbsde/regression.hpp"
#include "levyfbsde/rng.hpp"

using namespace levyfbsde;
using Eigen::VectorXd;
using doctest::Approx;

namespace {

VectorXd normals(int n, std::uint64_t seed, int col = 0) {
  const CounterStream s(seed, StreamTag::Synthetic);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = s.normal_pair(i, col)[0];
  return v;
}

BasisSpec unguarded(BasisSpec b) {
  b.guard_lo_quantile = 0.0;
  b.guard_hi_quantile = 1.0;
  return b;
}

}  // namespace

TEST_CASE("constants and exact spans") {
  const VectorXd x = normals(500, 1);
  for (const BasisSpec& b : {BasisSpec::polynomial(0), BasisSpec::polynomial(5), BasisSpec::local_partition(7)}) {
    const CondExpEstimator e = fit(x, VectorXd::Constant(500, -1.75), b);
    CHECK((e.predict(x).array() + 1.75).abs().maxCoeff() < 1e-12);
  }
  const CondExpEstimator lin = fit(x, (2.0 * x.array() + 1.0).matrix(), BasisSpec::polynomial(1));
  CHECK(lin.polynomial_coefficients()[0] == Approx(1.0).epsilon(1e-10));
  CHECK(lin.polynomial_coefficients()[1] == Approx(2.0).epsilon(1e-10));
}

TEST_CASE("direct evaluation") {
  VectorXd c(2);
  c << 0.0, 1.0;
  const CondExpEstimator id(BasisSpec::polynomial(1), FeatureMap{}, c);
  VectorXd f(3);
  f << -1.0, 0.0, 2.0;
  CHECK(id.predict(f) == f);
  const CondExpEstimator k(BasisSpec::polynomial(0), FeatureMap{}, VectorXd::Constant(1, 3.0));
  CHECK(k(1e9) == 3.0);
  CHECK_THROWS(CondExpEstimator(BasisSpec::polynomial(2), FeatureMap{}, c));
}

TEST_CASE("clipping guard") {
  FeatureMap m;
  m.lo = -1.0;
  m.hi = 1.0;
  VectorXd c(3);
  c << 0.5, -1.0, 2.0;
  const CondExpEstimator e(BasisSpec::polynomial(2), m, c);
  CHECK(e(5.0) == e(1.0));
  CHECK(e(-7.0) == e(-1.0));
  CHECK(e(0.5) == Approx(0.5 - 0.5 + 0.5));

  VectorXd x = normals(2000, 2);
  x[0] = 1e6;  // a wild point must not drive the fit
  const Projector p(x, BasisSpec::polynomial(3));
  CHECK(p.feature_map().hi < 10.0);
  CHECK(p.feature_map().lo > -10.0);
}

TEST_CASE("guard quantile indexing") {
  std::vector<double> v = {5, 1, 4, 2, 3};
  CHECK(guard_quantile(v, 0.0) == 1);
  CHECK(guard_quantile(v, 1.0) == 5);
  CHECK(guard_quantile(v, 0.1) == 1);  // floor(0.4)
  CHECK(guard_quantile(v, 0.9) == 5);  // ceil(3.6)
  CHECK(guard_quantile(v, 0.5) == 3);
}

TEST_CASE("least squares against an independent QR solve") {
  const int n = 3000;
  const VectorXd x = normals(n, 3);
  const VectorXd noise = normals(n, 4);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = std::sin(x[i]) + 0.3 * noise[i];
  const CondExpEstimator e = fit(x, y, unguarded(BasisSpec::polynomial(3)));
  Eigen::MatrixXd A(n, 4);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < 4; ++k) A(i, k) = std::pow(x[i], k);
  const VectorXd beta = A.householderQr().solve(y);
  const VectorXd raw = e.polynomial_coefficients();
  for (int k = 0; k < 4; ++k) CHECK(raw[k] == Approx(beta[k]).epsilon(1e-8));
  CHECK((e.predict(x) - A * beta).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("local partition equals cell means") {
  const int n = 4000;
  const VectorXd x = normals(n, 5);
  const VectorXd y = x.array().cube().matrix() + normals(n, 6);
  const BasisSpec b = unguarded(BasisSpec::local_partition(5));
  const Projector p(x, b);
  const CondExpEstimator e = p.fit(y);
  const auto& edges = p.feature_map().edges;
  REQUIRE(edges.size() == 4);
  std::vector<double> sum(5, 0.0), cnt(5, 0.0);
  for (int i = 0; i < n; ++i) {
    int c = 0;
    while (c < 4 && x[i] >= edges[c]) ++c;  // cells are [lo, hi)
    sum[c] += y[i];
    cnt[c] += 1;
  }
  for (int c = 0; c < 5; ++c) {
    const double probe = c == 0 ? edges[0] - 1.0 : (c == 4 ? edges[3] + 1.0 : 0.5 * (edges[c - 1] + edges[c]));
    CHECK(e(probe) == Approx(sum[c] / cnt[c]).epsilon(1e-10));
  }
}

TEST_CASE("conditional expectation is recovered") {
  const int n = 200000;
  const VectorXd x = normals(n, 7);
  const VectorXd eta = normals(n, 8);
  const VectorXd y = (x.array().square() + eta.array()).matrix();
  const CondExpEstimator e = fit(x, y, BasisSpec::polynomial(2));
  for (double probe : {-1.0, 0.0, 0.5, 1.5}) CHECK(std::abs(e(probe) - probe * probe) < 0.03);
}

TEST_CASE("projector reuse, threads and fitted values") {
  const VectorXd x = normals(10000, 9);
  const VectorXd y = x.array().exp().matrix();
  const Projector p1(x, BasisSpec::polynomial(4), 1), p3(x, BasisSpec::polynomial(4), 3);
  const CondExpEstimator a = p1.fit(y), b = p3.fit(y);
  CHECK(a.coefficients() == b.coefficients());
  CHECK((p1.fitted(a) - a.predict(x)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(p1.rank() == 5);
  CHECK(std::isfinite(p1.condition()));
}

TEST_CASE("degenerate inputs") {
  CHECK_THROWS(Projector(VectorXd::Zero(9), BasisSpec::polynomial(4)));
  VectorXd bad = normals(100, 10);
  bad[3] = std::nan("");
  CHECK_THROWS(Projector(bad, BasisSpec::polynomial(2)));
  // constant feature: rank drops but constants are still reproduced
  const Projector p(VectorXd::Constant(100, 2.0), BasisSpec::polynomial(3));
  CHECK(p.rank() == 1);
  CHECK(p.fit(VectorXd::Constant(100, 4.0))(2.0) == Approx(4.0));
}
