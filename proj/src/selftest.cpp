#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "levyfbsde/commands.hpp"
#include "levyfbsde/harness.hpp"
#include "levyfbsde/rng.hpp"

namespace levyfbsde {

namespace {

namespace fs = std::filesystem;
using Eigen::VectorXd;

struct Failure {
  std::string what;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string num(double x) { return format_number(x); }

CoefficientSet plain(ScalarFn b, ScalarFn db, double beta, ScalarFn g, ScalarFn dg) {
  CoefficientSet c;
  c.name = "selftest";
  c.b = std::move(b);
  c.db = std::move(db);
  c.beta = [beta](double) { return beta; };
  c.dbeta = [](double) { return 0.0; };
  c.g = std::move(g);
  c.dg = std::move(dg);
  c.f = [](double, double, double, double) { return 0.0; };
  c.df_dx = c.df_dy = c.df_dgamma = c.f;
  auto zero = [](double) { return 0.0; };
  c.linear = LinearGenerator{zero, zero, zero};
  c.x_free = true;
  c.lipschitz = 1.0;
  return c;
}

std::shared_ptr<const LevyModel> stable(double alpha) {
  return std::make_shared<LevyModel>(LevyFamily::symmetric_stable(alpha));
}

void truncation_full_support() {
  for (const LevyFamily& f : {LevyFamily::symmetric_stable(0.7), LevyFamily::tempered_stable(1.3, 2.0),
                              LevyFamily::exponential_tails(1.5, 1.0)}) {
    const LevyModel m(f);
    const TruncationView v = make_truncation(m, m.e_max());
    check(v.nu_big == 0.0, f.name() + ": nu_big = " + num(v.nu_big));
    check(std::abs(v.sigma2() - m.second_moment()) <= 1e-12 * m.second_moment(),
          f.name() + ": sigma^2 differs from the second moment");
  }
}

void no_big_jumps() {
  const LevyModel m(LevyFamily::symmetric_stable(1.2));
  const TruncationView v = make_truncation(m, m.e_max());
  const CounterStream s(7, StreamTag::Jumps);
  for (std::uint64_t p = 0; p < 1000; ++p)
    check(sample_big_jumps(v, m, 1.0, s, p).empty(), "jumps drawn at zero intensity");
}

void no_dynamics() {
  auto model = stable(0.8);
  const TruncationView v = make_truncation(*model, 0.1);
  const CoefficientSet c = make_preset("zero_f_identity_g", {{"b_bar", 0.0}, {"beta0", 0.0}});
  const ForwardPaths p = simulate_forward(model, v, c, Grid(16), 200, {3, 0, 0.0}, 1.25);
  check((p.X.array() == 1.25).all(), "X moved without dynamics");
}

void deterministic_recursion() {
  auto model = stable(0.8);
  const TruncationView v = make_truncation(*model, 0.1);
  const CoefficientSet c =
      plain([](double x) { return -x; }, [](double) { return -1.0; }, 0.0,
            [](double x) { return x; }, [](double) { return 1.0; });
  const int n = 20;
  const ForwardPaths p = simulate_forward(model, v, c, Grid(n), 50, {3, 0, 0.0}, 2.0);
  const double dt = 1.0 / n;
  for (Eigen::Index r = 0; r < p.paths(); ++r) {
    double x = 2.0;
    for (int i = 0; i < n; ++i) {
      x += -x * dt;
      check(p.X(r, i + 1) == x, "path " + std::to_string(r) + " leaves the Euler recursion");
    }
  }
  const double closed = 2.0 * std::pow(1.0 - dt, n);
  check(std::abs(p.X(0, n) - closed) <= 1e-14 * closed, "X_T differs from x0 (1 - dt)^n");
}

void reference_at_same_cutoff() {
  auto model = stable(1.2);
  const double eps = 0.2;
  const TruncationView v = make_truncation(*model, eps);
  const CoefficientSet c = make_preset("zero_f_identity_g");
  const int n = 8, r = 8;
  const NoiseSpec noise{11, n * r, eps};
  const ForwardPaths coarse = simulate_forward(model, v, c, Grid(n), 500, noise, 0.5);
  const ForwardPaths ref = simulate_reference(model, c, Grid(n * r), eps, 500, noise, 0.5);
  for (int i = 0; i <= n; ++i) {
    const double d = (coarse.X.col(i) - ref.X.col(i * r)).cwiseAbs().maxCoeff();
    check(d <= 1e-10, "node " + std::to_string(i) + ": difference " + num(d));
  }
}

void reference_without_noise() {
  auto model = stable(1.2);
  const double eps = 0.2;
  const TruncationView v = make_truncation(*model, eps);
  const CoefficientSet c =
      plain([](double x) { return -x; }, [](double) { return -1.0; }, 0.0,
            [](double x) { return x; }, [](double) { return 1.0; });
  const int n = 16, r = 8;
  const NoiseSpec noise{5, n * r, eps / 8};
  const ForwardPaths coarse = simulate_forward(model, v, c, Grid(n), 100, noise, 1.0);
  const ForwardPaths ref = simulate_reference(model, c, Grid(n * r), eps / 8, 100, noise, 1.0);
  double d = 0.0;
  for (int i = 0; i <= n; ++i) d = std::max(d, (coarse.X.col(i) - ref.X.col(i * r)).cwiseAbs().maxCoeff());
  check(d <= 1.0 / n, "pathwise difference " + num(d) + " exceeds dt");
  const double e = estimate_err_forward(coarse, ref).value;
  check(e <= 1.0 / (n * n), "err_forward " + num(e) + " exceeds dt^2");
}

void derivative_paths() {
  auto model = stable(0.9);
  const TruncationView v = make_truncation(*model, 0.1);
  const CoefficientSet c = make_preset("zero_f_identity_g");
  ForwardPaths p = simulate_forward(model, v, c, Grid(8), 100, {9, 0, 0.0}, 0.0);
  for (int j : {0, 3, 8}) {
    propagate_malliavin_w(p, c, j);
    propagate_malliavin_jump(p, c, j);
    for (int i = j; i <= 8; ++i) {
      check((p.DX.at(j).col(i).array() == v.sigma_eps).all(),
            "D_{t_" + std::to_string(j) + "} X_" + std::to_string(i) + " != sigma(eps)");
      check((p.DXe.at(j).col(i).array() - 1.0).abs().maxCoeff() <= 1e-12,
            "D_{t_" + std::to_string(j) + ",e} X_" + std::to_string(i) + " != 1");
    }
    const VectorXd xt = p.X.col(8), dt = p.DXe.at(j).col(8);
    for (Eigen::Index r = 0; r < xt.size(); ++r) {
      const double lhs = c.g(xt[r] + dt[r]) - c.g(xt[r]);
      check(std::abs(lhs - dt[r]) <= 1e-12 * std::max(1.0, std::abs(xt[r])),
            "g increment differs from the jump derivative");
    }
  }
}

void regression_exact_cases() {
  VectorXd x(200);
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = std::sin(0.37 * i) * 3.0;
  for (const BasisSpec& b : {BasisSpec::polynomial(4), BasisSpec::local_partition(6)}) {
    const CondExpEstimator e = fit(x, VectorXd::Constant(200, 2.5), b);
    check((e.predict(x).array() - 2.5).abs().maxCoeff() <= 1e-12, b.describe() + ": constant not reproduced");
  }
  const CondExpEstimator lin = fit(x, (2.0 * x.array() + 1.0).matrix(), BasisSpec::polynomial(1));
  const VectorXd pc = lin.polynomial_coefficients();
  check(std::abs(pc[0] - 1.0) <= 1e-10 && std::abs(pc[1] - 2.0) <= 1e-10,
        "linear target gives coefficients (" + num(pc[0]) + ", " + num(pc[1]) + ")");

  const CondExpEstimator c0(BasisSpec::polynomial(0), FeatureMap{}, VectorXd::Constant(1, -4.0));
  VectorXd probe(3);
  probe << -1e6, 0.0, 17.0;
  check((c0.predict(probe).array() == -4.0).all(), "constant estimator is not constant");

  VectorXd coef(2);
  coef << 0.0, 1.0;
  const CondExpEstimator id(BasisSpec::polynomial(1), FeatureMap{}, coef);
  VectorXd f(3), want(3);
  f << -1.0, 0.0, 2.0;
  check((id.predict(f) - f).cwiseAbs().maxCoeff() == 0.0, "identity polynomial changes its input");

  FeatureMap guard;
  guard.lo = -1.0;
  guard.hi = 2.0;
  const CondExpEstimator clipped(BasisSpec::polynomial(1), guard, coef);
  f << -5.0, 0.5, 9.0;
  want << -1.0, 0.5, 2.0;
  check((clipped.predict(f) - want).cwiseAbs().maxCoeff() == 0.0, "guard does not clip");
}

void malliavin_trivial_weights() {
  auto model = stable(1.1);
  const TruncationView v = make_truncation(*model, 0.1);
  const CoefficientSet c = make_preset("zero_f_identity_g");
  const ForwardPaths p = simulate_forward(model, v, c, Grid(8), 2000, {13, 0, 0.0}, 1.0);
  const BackwardSolution s = solve_malliavin(p, v, c);
  check((s.Z.leftCols(8).array() - v.sigma_eps).abs().maxCoeff() <= 1e-12, "Z differs from sigma(eps)");
  const MalliavinWeights w = build_weights(p, v, c, 2, 7);
  check((w.log_E.array().abs() == 0.0).all(), "weights differ from one with f = 0");

  const CoefficientSet lin = make_preset("linear_bsde", {{"f2", 0.5}, {"f3", 0.0}});
  const ForwardPaths q = simulate_forward(model, v, lin, Grid(8), 300, {13, 0, 0.0}, 1.0);
  for (int i = 0; i <= 8; ++i)
    check(build_weights(q, v, lin, i, i).log_E.cwiseAbs().maxCoeff() == 0.0, "E(t_i, t_i) != 1");
  const MalliavinWeights w2 = build_weights(q, v, lin, 1, 6);
  check((w2.log_E.array() - 0.5 * 5.0 / 8.0).abs().maxCoeff() <= 1e-12,
        "E(t_i, t_j) is not exp(sum f2 dt) without jumps in the generator");
}

void harness_zero_cases() {
  auto model = stable(0.9);
  const TruncationView v = make_truncation(*model, 0.1);
  const CoefficientSet c = make_preset("linear_bsde");
  const ForwardPaths p = simulate_forward(model, v, c, Grid(8), 2000, {17, 0, 0.0}, 1.0);
  check(estimate_err_forward(p, p).value == 0.0, "err_forward of identical inputs is not zero");
  SolverOptions o;
  o.materialize = false;
  const BackwardSolution s = solve_backward_euler(p, v, c, o);
  check(estimate_err_n(s, p, s, p).total.value == 0.0, "err_n of identical inputs is not zero");

  const CoefficientSet flat =
      plain([](double x) { return -0.5 * x; }, [](double) { return -0.5; }, 1.0,
            [](double) { return 3.0; }, [](double) { return 0.0; });
  const NoiseSpec noise{19, 64, 0.0};
  const ForwardPaths fp = simulate_forward(model, v, flat, Grid(64), 8000, noise, 1.0);
  const ForwardPaths cp = simulate_forward(model, v, flat, Grid(8), 2000, noise, 1.0);
  for (SchemeKind k : {SchemeKind::Euler, SchemeKind::Malliavin}) {
    const BackwardSolution fs = solve_backward_euler(fp, v, flat, o);
    const BackwardSolution cs = solve(k, cp, v, flat, o);
    const double e = estimate_err_n(fs, fp, cs, cp).total.value;
    check(e <= 1e-10, to_string(k) + ": constant terminal value gives error " + num(e));
  }
}

void rate_fit_exact() {
  std::vector<std::pair<double, double>> sq, root;
  for (double h : {0.5, 0.25, 0.125, 0.0625}) {
    sq.emplace_back(h, h * h);
    root.emplace_back(h, 3.0 * std::sqrt(h));
  }
  const RateFit a = fit_rate(sq), b = fit_rate(root);
  check(std::abs(a.slope - 2.0) <= 1e-12 && std::abs(a.r2 - 1.0) <= 1e-12, "h^2 not fitted exactly");
  check(std::abs(b.slope - 0.5) <= 1e-12 && std::abs(b.intercept - std::log(3.0)) <= 1e-12,
        "3 h^0.5 not fitted exactly");
}

fs::path scratch_dir() {
  const fs::path d = fs::temp_directory_path() /
                     ("levyfbsde-selftest-" + std::to_string(splitmix64(std::chrono::steady_clock::now()
                                                                            .time_since_epoch()
                                                                            .count())));
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json small_config(const fs::path& dir, const std::string& id) {
  return {{"experiment_id", id},
          {"model", {{"family", "symmetric_stable"}, {"alpha", 0.8}}},
          {"coefficients", {{"preset", "linear_bsde"}}},
          {"grid", {{"T", 1.0}, {"n_sweep", {8, 16, 32}}}},
          {"eps", 0.2},
          {"M", 1000},
          {"scheme", "both"},
          {"basis", {{"kind", "polynomial"}, {"degree", 2}}},
          {"reference", {{"fine_n", 256}}},
          {"output_dir", dir.string()},
          {"timestamp", false}};
}

int run_json(const std::string& cmd, const nlohmann::json& j, const fs::path& file,
             const Overrides& o, std::string* diagnostics = nullptr) {
  std::ofstream(file) << j.dump(2);
  std::ostringstream out, err;
  const int code = run_command(cmd, file.string(), o, out, err);
  if (diagnostics) *diagnostics = err.str();
  return code;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

void cli_contracts() {
  const fs::path dir = scratch_dir();
  struct Cleanup {
    fs::path d;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(d, ec);
    }
  } cleanup{dir};

  Overrides seed42;
  seed42.seed = 42;
  std::string diag;
  const auto cfg = small_config(dir, "rows");
  check(run_json("rates-backward", cfg, dir / "rows.json.in", seed42, &diag) == 0, "rates-backward failed: " + diag);
  const std::string first = slurp(dir / "rows.csv");
  const auto rows = lines(first);
  check(rows.size() == 1 + 6 + 2, "expected header, 6 rows and 2 rate rows, got " + std::to_string(rows.size()) + " lines");
  check(rows[0] == kCsvHeader, "CSV header mismatch");
  int rate_rows = 0;
  for (const auto& r : rows) rate_rows += r.find(",rate_") != std::string::npos;
  check(rate_rows == 2, "expected 2 rate rows");

  Overrides threads = seed42;
  threads.threads = 2;
  check(run_json("rates-backward", cfg, dir / "rows.json.in", threads, &diag) == 0, "rerun failed: " + diag);
  check(slurp(dir / "rows.csv") == first, "rerun with seed 42 changed the CSV");

  auto missing = cfg;
  missing.erase("M");
  check(run_json("solve", missing, dir / "missing.json.in", {}, &diag) == kExitConfig,
        "missing M did not exit with code 2");
  check(diag.find("'M'") != std::string::npos, "diagnostic does not name M: " + diag);

  auto holder = cfg;
  holder["experiment_id"] = "holder";
  holder["grid"] = {{"T", 1.0}, {"n", 16}};
  holder["scheme"] = "malliavin";
  check(run_json("holder", holder, dir / "holder.json.in", {}, &diag) == 0, "holder failed: " + diag);
  const auto hl = lines(slurp(dir / "holder_holder.csv"));
  check(!hl.empty() && hl[0].find(",gap,") != std::string::npos && hl[0].find("ratio") != std::string::npos,
        "holder CSV lacks gap/ratio columns");
  check(hl.size() == 4, "holder CSV should have one row per gap");
}

}  // namespace

int run_selftest(std::ostream& out) {
  const std::vector<std::pair<std::string, std::function<void()>>> checks = {
      {"truncation at e_max covers the full support", truncation_full_support},
      {"zero intensity draws no jumps", no_big_jumps},
      {"no dynamics keeps X at x0", no_dynamics},
      {"drift-only paths follow the Euler recursion", deterministic_recursion},
      {"reference at delta = eps matches the coarse paths", reference_at_same_cutoff},
      {"noise-free reference is O(dt) from the coarse paths", reference_without_noise},
      {"derivative paths of the identity model", derivative_paths},
      {"regression reproduces its span", regression_exact_cases},
      {"malliavin weights without a generator", malliavin_trivial_weights},
      {"error functionals vanish on degenerate inputs", harness_zero_cases},
      {"rate fit on exact power laws", rate_fit_exact},
      {"cli row count, determinism and diagnostics", cli_contracts},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    std::string status = "ok";
    try {
      fn();
    } catch (const Failure& f) {
      status = "FAIL (" + f.what + ")";
    } catch (const std::exception& e) {
      status = std::string("FAIL (exception: ") + e.what() + ")";
    }
    if (status != "ok") ++failed;
    out << status << "  " << name << "\n";
  }
  out << (failed ? std::to_string(failed) + " check(s) failed" : "all checks passed") << "\n";
  return failed ? kExitFailure : kExitOk;
}

}  // namespace levyfbsde
