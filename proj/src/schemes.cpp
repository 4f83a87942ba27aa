#include "levyfbsde/schemes.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "levyfbsde/parallel.hpp"

namespace levyfbsde {

namespace {

constexpr double kLogOverflow = 700.0;
constexpr double kAlphaDenominator = 1e-12;
constexpr int kFixedPointIterations = 50;

[[noreturn]] void weight_overflow(int node, Index path) {
  std::ostringstream os;
  os << "malliavin: weight overflow (|log E| > 700) on interval starting at node " << node
     << ", path " << path;
  throw std::runtime_error(os.str());
}

void require_linear(const CoefficientSet& c) {
  if (!c.linear || !c.x_free)
    throw std::invalid_argument(
        "malliavin scheme: coefficients '" + c.name +
        "' lack the linear generator form f1(t) + f2(t) y + f3(t) gamma");
}

std::vector<Estimate> empty_stats(int n) { return std::vector<Estimate>(n); }

// Shared setup of a solution record.
BackwardSolution start(SchemeKind scheme, const ForwardPaths& paths, const TruncationView& view,
                       const CoefficientSet& coeffs, const SolverOptions& options) {
  if (std::abs(view.eps - paths.eps) > 1e-15 * std::max(1.0, view.eps))
    throw std::invalid_argument("backward solver: paths were simulated with eps = " +
                                std::to_string(paths.eps) + ", view has eps = " +
                                std::to_string(view.eps));
  BackwardSolution s;
  s.scheme = scheme;
  s.grid = paths.grid;
  s.view = view;
  s.gamma = options.gamma;
  s.kernel_mass = gamma_kernel_mass(view, options.gamma);
  s.coeffs = coeffs;
  s.paths = paths.paths();
  s.nodes.resize(paths.grid.n);
  s.z_targets = empty_stats(paths.grid.n);
  s.gamma_targets = empty_stats(paths.grid.n);
  s.u_targets = empty_stats(paths.grid.n);
  return s;
}

void terminal(const BackwardSolution& s, const Eigen::Ref<const Eigen::VectorXd>& x,
              NodeValues& out) {
  const auto& c = s.coeffs;
  const Index m = x.size();
  out.Y.resize(m);
  out.Z.resize(m);
  out.U.resize(m);
  out.Gamma.resize(m);
  for (Index p = 0; p < m; ++p) {
    const double xp = x[p], be = c.beta(xp), gx = c.g(xp);
    out.Y[p] = gx;
    out.Z[p] = s.view.sigma_eps * c.dg(xp) * be;
    out.U[p] = c.g(xp + be) - gx;
    out.Gamma[p] = s.kernel_mass * out.U[p];
  }
}

void store(BackwardSolution& s, int i, const NodeValues& v) {
  s.Y.col(i) = v.Y;
  s.Z.col(i) = v.Z;
  s.Gamma.col(i) = v.Gamma;
  s.U.col(i) = v.U;
}

}  // namespace

SchemeKind parse_scheme(const std::string& s) {
  if (s == "euler") return SchemeKind::Euler;
  if (s == "malliavin") return SchemeKind::Malliavin;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

std::string to_string(SchemeKind s) { return s == SchemeKind::Euler ? "euler" : "malliavin"; }

double BackwardSolution::implicit_y(int node, double x, double cont, double gm) const {
  const double t = grid.node(node), dt = grid.dt();
  if (coeffs.linear) {
    const auto& l = *coeffs.linear;
    return (cont + dt * (l.f1(t) + l.f3(t) * gm)) / (1.0 - dt * l.f2(t));
  }
  double y = cont;
  for (int it = 0; it < kFixedPointIterations; ++it) {
    const double next = cont + dt * coeffs.f(t, x, y, gm);
    if (std::abs(next - y) <= 1e-13 * (1.0 + std::abs(next))) return next;
    y = next;
  }
  throw std::runtime_error("euler: implicit step at node " + std::to_string(node) +
                           " did not converge in 50 iterations; increase n so that K dt < 1");
}

NodeValues BackwardSolution::evaluate(int node, const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (node < 0 || node > grid.n) throw std::out_of_range("evaluate: node outside [0,n]");
  NodeValues out;
  if (node == grid.n) {
    terminal(*this, x, out);
    return out;
  }
  const NodeModel& nm = nodes[node];
  out.Z = nm.z.predict(x);
  out.U = nm.u.predict(x);
  if (scheme == SchemeKind::Malliavin) {
    out.Y = nm.y.predict(x);
    out.Gamma = kernel_mass * out.U;
  } else {
    out.Gamma = nm.gamma.predict(x);
    out.Y.resize(x.size());
    for (Index p = 0; p < x.size(); ++p) out.Y[p] = implicit_y(node, x[p], nm.y(x[p]), out.Gamma[p]);
  }
  return out;
}

BackwardSolution::Theta BackwardSolution::theta(int node, const ForwardPaths& paths) const {
  Theta t;
  t.X = paths.X.col(node);
  if (materialized()) {
    t.Y = Y.col(node);
    t.Gamma = Gamma.col(node);
  } else {
    NodeValues v = evaluate(node, t.X);
    t.Y = std::move(v.Y);
    t.Gamma = std::move(v.Gamma);
  }
  return t;
}

BackwardSolution solve_backward_euler(const ForwardPaths& paths, const TruncationView& view,
                                      const CoefficientSet& coeffs,
                                      const SolverOptions& options) {
  BackwardSolution s = start(SchemeKind::Euler, paths, view, coeffs, options);
  const int n = paths.grid.n;
  const Index M = paths.paths();
  const double dt = paths.grid.dt();
  const Moment weight = euler_jump_weight(options.gamma);
  const Bootstrap boot(M, options.bootstrap_seed);
  if (options.materialize) {
    s.Y.resize(M, n + 1);
    s.Z.resize(M, n + 1);
    s.Gamma.resize(M, n + 1);
    s.U.resize(M, n + 1);
  }

  NodeValues cur;
  terminal(s, paths.X.col(n), cur);
  if (options.materialize) store(s, n, cur);
  s.pathwise_y0 = cur.Y;

  for (int i = n - 1; i >= 0; --i) {
    const Eigen::VectorXd x = paths.X.col(i);
    const Projector proj(x, options.basis, options.threads);
    NodeModel& nm = s.nodes[i];
    nm.y = proj.fit(cur.Y);
    const Eigen::VectorXd cont = nm.y.predict(x);
    const Eigen::VectorXd resid = cur.Y - cont;

    const Eigen::VectorXd dw = paths.brownian_increment(i);
    const Eigen::VectorXd K = paths.jump_sum(i, weight);
    const Eigen::VectorXd J = paths.jump_sum(i, Moment::Mark);
    const Eigen::VectorXd z_t = resid.cwiseProduct(dw) / dt;
    const Eigen::VectorXd g_t = resid.cwiseProduct(K) / dt;
    const Eigen::VectorXd u_t = view.m_big > 0.0 ? Eigen::VectorXd(resid.cwiseProduct(J) / (dt * view.m_big))
                                                 : Eigen::VectorXd::Zero(M);
    nm.z = proj.fit(z_t);
    nm.gamma = proj.fit(g_t);
    nm.u = proj.fit(u_t);
    s.z_targets[i] = boot.mean(z_t);
    s.gamma_targets[i] = boot.mean(g_t);
    s.u_targets[i] = boot.mean(u_t);

    NodeValues next;
    next.Z = nm.z.predict(x);
    next.Gamma = nm.gamma.predict(x);
    next.U = nm.u.predict(x);
    next.Y.resize(M);
    const double t = paths.grid.node(i);
    for (Index p = 0; p < M; ++p) {
      next.Y[p] = s.implicit_y(i, x[p], cont[p], next.Gamma[p]);
      s.pathwise_y0[p] += dt * coeffs.f(t, x[p], next.Y[p], next.Gamma[p]);
    }
    if (!next.Y.allFinite() || !next.Z.allFinite() || !next.Gamma.allFinite())
      throw std::runtime_error("euler: non-finite values at node " + std::to_string(i));
    if (options.materialize) store(s, i, next);
    cur = std::move(next);
  }
  s.y0 = boot.mean(s.pathwise_y0);
  return s;
}

BackwardSolution solve_malliavin(const ForwardPaths& paths, const TruncationView& view,
                                 const CoefficientSet& coeffs, const SolverOptions& options) {
  require_linear(coeffs);
  BackwardSolution s = start(SchemeKind::Malliavin, paths, view, coeffs, options);
  const int n = paths.grid.n;
  const Index M = paths.paths();
  const double dt = paths.grid.dt();
  const double sigma = view.sigma_eps;
  const double r2m = weight_quadratic_mass(view, options.gamma);
  const double kmass = s.kernel_mass;
  const auto& lin = *coeffs.linear;
  const Bootstrap boot(M, options.bootstrap_seed);

  const Eigen::MatrixXd dW = paths.brownian_increments();
  const Eigen::MatrixXd J = paths.jump_sums(Moment::Mark);
  const Eigen::MatrixXd H = paths.jump_sums(euler_jump_weight(options.gamma));

  bool alpha_vanishes = true;
  for (int k = 0; k <= n; ++k) {
    const double t = paths.grid.node(k);
    if (lin.f2(t) != 0.0 || lin.f3(t) != 0.0) alpha_vanishes = false;
  }

  // Y and Gamma at every node are needed by the jump-direction quotients.
  s.Y.resize(M, n + 1);
  s.Z.resize(M, n + 1);
  s.Gamma.resize(M, n + 1);
  s.U.resize(M, n + 1);
  {
    NodeValues term;
    terminal(s, paths.X.col(n), term);
    store(s, n, term);
  }
  s.pathwise_y0 = s.Y.col(n);

  auto y_at = [&](int k, double x) { return k == n ? coeffs.g(x) : s.nodes[k].y(x); };
  auto gamma_at = [&](int k, double x) {
    return k == n ? kmass * (coeffs.g(x + coeffs.beta(x)) - coeffs.g(x)) : kmass * s.nodes[k].u(x);
  };

  Eigen::VectorXd S = Eigen::VectorXd::Ones(M);     // product of the derivative factors
  Eigen::VectorXd logE = Eigen::VectorXd::Zero(M);  // log E(t_{i+1}, t_n)
  Eigen::VectorXd P = Eigen::VectorXd::Zero(M);     // df/dx sum
  Eigen::VectorXd ell_next = Eigen::VectorXd::Zero(M);

  for (int i = n - 1; i >= 0; --i) {
    const double t1 = paths.grid.node(i + 1);
    Eigen::VectorXd y_t(M), z_t(M), u_t(M);
    parallel_blocks(M, options.threads, [&](std::int64_t, std::int64_t b, std::int64_t e) {
      for (Index p = b; p < e; ++p) {
        const double x1 = paths.X(p, i + 1), y1 = s.Y(p, i + 1), g1 = s.Gamma(p, i + 1);
        const double fdt = coeffs.f(t1, x1, y1, g1) * dt;
        y_t[p] = y1 + fdt;
        s.pathwise_y0[p] += fdt;

        double ell = 0.0;
        if (i + 1 < n) {
          ell = log_weight_increment(lin.f2(t1), lin.f3(t1), H(p, i + 1), r2m, dt);
          logE[p] += ell;
          if (std::abs(logE[p]) > kLogOverflow) weight_overflow(i + 1, p);
        }
        const double xi = paths.X(p, i);
        const double db = coeffs.dbeta(xi);
        const double fac = 1.0 + coeffs.db(xi) * dt + sigma * db * dW(p, i) + db * J(p, i);
        P[p] = fac * (coeffs.df_dx(t1, x1, y1, g1) + (i + 1 < n ? std::exp(ell) * P[p] : 0.0));
        S[p] *= fac;
        z_t[p] = sigma * coeffs.beta(xi) *
                 (std::exp(logE[p]) * coeffs.dg(paths.X(p, n)) * S[p] + dt * P[p]);

        // Jump direction at t_i: shifted path with identical noise.
        double xs = xi + coeffs.beta(xi);
        double logEe = 0.0, sum = 0.0;
        for (int k = i + 1; k <= n; ++k) {
          const double be = coeffs.beta(xs);
          xs += coeffs.b(xs) * dt + sigma * be * dW(p, k - 1) + be * J(p, k - 1);
          if (alpha_vanishes) continue;
          const double tk = paths.grid.node(k);
          const double xk = paths.X(p, k), yk = s.Y(p, k), gk = s.Gamma(p, k);
          const double dx = xs - xk;
          const double dy = y_at(k, xs) - yk;
          const double dg = gamma_at(k, xs) - gk;
          const double den = dx + dy + dg;
          const double a = std::abs(den) < kAlphaDenominator
                               ? 0.0
                               : (coeffs.f(tk, xk + dx, yk + dy, gk + dg) - coeffs.f(tk, xk, yk, gk)) / den;
          sum += std::exp(logEe) * a * dx * dt;
          if (k < n) {
            logEe += log_weight_increment(a, a, H(p, k), r2m, dt);
            if (std::abs(logEe) > kLogOverflow) weight_overflow(k, p);
          }
        }
        const double xT = paths.X(p, n);
        u_t[p] = std::exp(logEe) * (coeffs.g(xs) - coeffs.g(xT)) + sum;
      }
    });
    if (!y_t.allFinite() || !z_t.allFinite() || !u_t.allFinite())
      throw std::runtime_error("malliavin: non-finite regression targets at node " +
                               std::to_string(i));

    const Eigen::VectorXd x = paths.X.col(i);
    const Projector proj(x, options.basis, options.threads);
    NodeModel& nm = s.nodes[i];
    nm.y = proj.fit(y_t);
    nm.z = proj.fit(z_t);
    nm.u = proj.fit(u_t);
    nm.gamma = nm.u.scaled(kmass);
    s.z_targets[i] = boot.mean(z_t);
    s.u_targets[i] = boot.mean(u_t);
    s.gamma_targets[i] = {kmass * s.u_targets[i].value, std::abs(kmass) * s.u_targets[i].se};

    NodeValues v;
    v.Y = nm.y.predict(x);
    v.Z = nm.z.predict(x);
    v.U = nm.u.predict(x);
    v.Gamma = kmass * v.U;
    store(s, i, v);
  }
  s.y0 = boot.mean(s.pathwise_y0);
  if (!options.materialize) {
    s.Y.resize(0, 0);
    s.Z.resize(0, 0);
    s.Gamma.resize(0, 0);
    s.U.resize(0, 0);
  }
  return s;
}

BackwardSolution solve(SchemeKind scheme, const ForwardPaths& paths, const TruncationView& view,
                       const CoefficientSet& coeffs, const SolverOptions& options) {
  return scheme == SchemeKind::Euler ? solve_backward_euler(paths, view, coeffs, options)
                                     : solve_malliavin(paths, view, coeffs, options);
}

MalliavinWeights build_weights(const ForwardPaths& paths, const TruncationView& view,
                               const CoefficientSet& coeffs, int i, int j,
                               const BackwardSolution* solution, int theta,
                               GammaConvention gamma) {
  require_linear(coeffs);
  if (solution) gamma = solution->gamma;
  const Moment kernel = euler_jump_weight(gamma);
  const double r2m = weight_quadratic_mass(view, gamma);
  const int n = paths.grid.n;
  if (i < 0 || j > n || i > j) throw std::invalid_argument("build_weights: need 0 <= i <= j <= n");
  const Index M = paths.paths();
  const double dt = paths.grid.dt();
  const auto& lin = *coeffs.linear;
  MalliavinWeights w;
  w.i = i;
  w.j = j;
  w.theta = theta;
  w.log_E = Eigen::VectorXd::Zero(M);
  std::vector<Eigen::VectorXd> H(j - i);
  for (int k = i; k < j; ++k) {
    H[k - i] = paths.jump_sum(k, kernel);
    const double t = paths.grid.node(k);
    for (Index p = 0; p < M; ++p) {
      w.log_E[p] += log_weight_increment(lin.f2(t), lin.f3(t), H[k - i][p], r2m, dt);
      if (std::abs(w.log_E[p]) > kLogOverflow) weight_overflow(k, p);
    }
  }
  if (!solution || theta < 0) return w;
  if (!solution->materialized())
    throw std::invalid_argument("build_weights: jump weights need a materialized solution");
  if (theta > i) throw std::invalid_argument("build_weights: theta must not exceed i");

  const double sigma = view.sigma_eps;
  w.alpha = Eigen::MatrixXd::Zero(M, j - i);
  w.log_Ee = Eigen::VectorXd::Zero(M);
  Eigen::VectorXd xs(M);
  for (Index p = 0; p < M; ++p) xs[p] = paths.X(p, theta) + coeffs.beta(paths.X(p, theta));
  for (int k = theta; k < j; ++k) {
    if (k >= i) {
      const double tk = paths.grid.node(k);
      const NodeValues shifted = solution->evaluate(k, xs);
      for (Index p = 0; p < M; ++p) {
        const double xk = paths.X(p, k), yk = solution->Y(p, k), gk = solution->Gamma(p, k);
        const double dx = xs[p] - xk, dy = shifted.Y[p] - yk, dg = shifted.Gamma[p] - gk;
        const double den = dx + dy + dg;
        const double a = std::abs(den) < kAlphaDenominator
                             ? 0.0
                             : (coeffs.f(tk, xk + dx, yk + dy, gk + dg) - coeffs.f(tk, xk, yk, gk)) / den;
        w.alpha(p, k - i) = a;
        w.log_Ee[p] += log_weight_increment(a, a, H[k - i][p], r2m, dt);
        if (std::abs(w.log_Ee[p]) > kLogOverflow) weight_overflow(k, p);
      }
    }
    const Eigen::VectorXd dw = paths.brownian_increment(k);
    const Eigen::VectorXd Jk = paths.jump_sum(k, Moment::Mark);
    for (Index p = 0; p < M; ++p) {
      const double be = coeffs.beta(xs[p]);
      xs[p] += coeffs.b(xs[p]) * dt + sigma * be * dw[p] + be * Jk[p];
    }
  }
  return w;
}

}  // namespace levyfbsde
