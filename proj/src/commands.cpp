#include "levyfbsde/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "levyfbsde/harness.hpp"

namespace levyfbsde {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string timestamp_line(const std::string& command) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string("# generated ") + buf + " by levyfbsde " + command;
}

json estimate_json(const Estimate& e) { return {{"value", e.value}, {"se", e.se}}; }

json fit_json(const RateFit& f) {
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {{"slope", num(f.slope)},       {"intercept", num(f.intercept)},
          {"r2", num(f.r2)},             {"slope_lo", num(f.slope_lo)},
          {"slope_hi", num(f.slope_hi)}};
}

class Writer {
 public:
  Writer(const ExperimentConfig& c, std::string command)
      : config_(c), command_(std::move(command)), dir_(c.output_dir) {
    fs::create_directories(dir_);
  }

  std::string path(const std::string& suffix) const {
    return (dir_ / (config_.experiment_id + suffix)).string();
  }

  void write(const std::string& file, const std::string& body, RunResult& result) const {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + file + "'");
    out << body;
    if (!out) throw std::runtime_error("write failed for '" + file + "'");
    result.files.push_back(file);
  }

  std::string header() const {
    return config_.timestamp ? timestamp_line(command_) + "\n" : std::string();
  }

  void csv(RunResult& result) const {
    std::string body = header();
    body += kCsvHeader;
    body += '\n';
    for (const CsvRow& r : result.rows) body += format_row(r) + '\n';
    write(path(".csv"), body, result);
  }

  void report(const json& results, RunResult& result) const {
    json j;
    j["command"] = command_;
    if (config_.timestamp) j["generated"] = timestamp_line(command_).substr(12);
    j["config"] = to_json(config_);
    j["results"] = results;
    write(path(".json"), j.dump(2) + "\n", result);
  }

  // Two-column log-log table.
  void dat(const std::string& suffix, const std::string& columns,
           const std::vector<std::pair<double, double>>& points, RunResult& result) const {
    std::string body = "# " + columns + "\n";
    for (const auto& [h, e] : points)
      body += format_number(std::log(h)) + " " + format_number(std::log(e)) + "\n";
    write(path(suffix), body, result);
  }

 private:
  const ExperimentConfig& config_;
  std::string command_;
  fs::path dir_;
};

CsvRow base_row(const ExperimentConfig& c, const std::string& scheme) {
  CsvRow r;
  r.experiment_id = c.experiment_id;
  r.scheme = scheme;
  r.M = static_cast<double>(c.M);
  r.seed = c.seed;
  r.n = r.eps = r.sigma_eps = kNaN;
  r.estimate = r.se = r.slope = r.slope_lo = r.slope_hi = kNaN;
  return r;
}

CsvRow rate_row(const ExperimentConfig& c, const std::string& scheme, const std::string& kind,
                const RateFit& fit) {
  CsvRow r = base_row(c, scheme);
  r.err_kind = kind;
  r.estimate = fit.intercept;
  r.slope = fit.slope;
  r.slope_lo = fit.slope_lo;
  r.slope_hi = fit.slope_hi;
  return r;
}

double eps_of(const ExperimentConfig& c, int n) {
  return c.sqrt_schedule ? 1.0 / std::sqrt(static_cast<double>(n)) : c.eps.front();
}

void require_single_n(const ExperimentConfig& c, const std::string& command) {
  if (c.n_sweep) throw ConfigError("grid.n_sweep", command + " takes a single grid.n");
}

void require_single_eps(const ExperimentConfig& c, const std::string& command) {
  if (c.eps_sweep) throw ConfigError("eps_sweep", command + " takes eps or schedule");
}

void require_schemes_supported(const ExperimentConfig& c, const CoefficientSet& coeffs) {
  for (SchemeKind s : c.schemes)
    if (s == SchemeKind::Malliavin && (!coeffs.linear || !coeffs.x_free))
      throw ConfigError("scheme", "the malliavin scheme needs a generator linear in (y, gamma) "
                                  "without x dependence; preset '" + c.preset + "' is not");
}

SolverOptions solver_options(const ExperimentConfig& c) {
  SolverOptions o;
  o.basis = c.basis;
  o.gamma = c.gamma;
  o.threads = c.threads;
  return o;
}

RunResult rates_forward(const ExperimentConfig& c, std::ostream& log) {
  require_single_n(c, "rates-forward");
  if (!c.eps_sweep || c.eps.size() < 3)
    throw ConfigError("eps_sweep", "rates-forward needs eps_sweep with at least three values");
  const ModelSetup setup = make_setup(c);
  ForwardRateConfig fc;
  fc.eps = c.eps;
  fc.n = c.n.front();
  fc.refinement = c.refinement;
  fc.delta_fraction = c.delta_fraction;
  fc.M = c.M;
  fc.seed = c.seed;
  fc.threads = c.threads;
  fc.table_nodes = c.table_nodes;
  log << "rates-forward: " << c.eps.size() << " cutoffs, n = " << fc.n << ", M = " << c.M << "\n";
  const ForwardRateResult res = run_forward_rates(setup, fc);

  RunResult out;
  json pts = json::array();
  std::vector<std::pair<double, double>> dat;
  for (const auto& p : res.points) {
    CsvRow r = base_row(c, "forward");
    r.n = fc.n;
    r.eps = p.eps;
    r.sigma_eps = p.sigma_eps;
    r.err_kind = "err_forward";
    r.estimate = p.err.value;
    r.se = p.err.se;
    out.rows.push_back(r);
    pts.push_back({{"eps", p.eps}, {"sigma_eps", p.sigma_eps}, {"err", estimate_json(p.err)}});
    dat.emplace_back(p.sigma_eps * p.sigma_eps, p.err.value);
  }
  CsvRow rate = rate_row(c, "forward", "rate_sigma2", res.fit);
  rate.n = fc.n;
  out.rows.push_back(rate);

  Writer w(c, "rates-forward");
  w.csv(out);
  w.dat("_forward.dat", "log sigma_eps^2, log E sup|X - X^eps|^2", dat, out);
  w.report({{"points", pts}, {"fit", fit_json(res.fit)}}, out);
  return out;
}

RunResult solve_command(const ExperimentConfig& c, std::ostream& log) {
  require_single_n(c, "solve");
  require_single_eps(c, "solve");
  const ModelSetup setup = make_setup(c);
  require_schemes_supported(c, setup.coeffs);
  const int n = c.n.front();
  const double eps = eps_of(c, n);
  const TruncationView view = make_truncation(*setup.model, eps);
  SimulationOptions sim;
  sim.threads = c.threads;
  sim.table_nodes = c.table_nodes;
  log << "solve: n = " << n << ", eps = " << eps << ", M = " << c.M << "\n";
  const ForwardPaths paths = simulate_forward(setup.model, view, setup.coeffs, Grid(n, c.T), c.M,
                                              NoiseSpec{c.seed, n, 0.0}, c.x0, sim);
  RunResult out;
  json sols = json::array();
  std::uint64_t k = 0;
  for (SchemeKind s : c.schemes) {
    SolverOptions opt = solver_options(c);
    opt.materialize = false;
    opt.bootstrap_seed = splitmix64(c.seed + 0x9E37ull * (++k));
    const BackwardSolution sol = solve(s, paths, view, setup.coeffs, opt);
    auto add = [&](const std::string& kind, const Estimate& e) {
      CsvRow r = base_row(c, to_string(s));
      r.n = n;
      r.eps = eps;
      r.sigma_eps = view.sigma_eps;
      r.err_kind = kind;
      r.estimate = e.value;
      r.se = e.se;
      out.rows.push_back(r);
    };
    add("y0", sol.y0);
    add("z0", sol.z_targets.front());
    add("gamma0", sol.gamma_targets.front());
    sols.push_back({{"scheme", to_string(s)},
                    {"y0", estimate_json(sol.y0)},
                    {"z0", estimate_json(sol.z_targets.front())},
                    {"gamma0", estimate_json(sol.gamma_targets.front())},
                    {"kernel_mass", sol.kernel_mass}});
  }
  Writer w(c, "solve");
  w.csv(out);
  w.report({{"eps", eps}, {"sigma_eps", view.sigma_eps}, {"solutions", sols}}, out);
  return out;
}

RunResult rates_backward(const ExperimentConfig& c, std::ostream& log) {
  require_single_eps(c, "rates-backward");
  const ModelSetup setup = make_setup(c);
  require_schemes_supported(c, setup.coeffs);
  const int n_max = *std::max_element(c.n.begin(), c.n.end());
  for (int n : c.n)
    if (c.fine_n % n != 0)
      throw ConfigError("reference.fine_n", "must be a multiple of every n (n = " +
                                                std::to_string(n) + ")");
  if (c.fine_n < 8 * n_max)
    throw ConfigError("reference.fine_n", "must be at least 8 times the largest n");

  BackwardRateConfig bc;
  bc.n = c.n;
  bc.schemes = c.schemes;
  bc.sqrt_schedule = c.sqrt_schedule;
  if (!c.sqrt_schedule) bc.eps = c.eps.front();
  bc.M = c.M;
  bc.fine_n = c.fine_n;
  bc.fine_M = c.fine_M_factor * c.M;
  bc.delta_fraction = c.delta_fraction;
  bc.solver = solver_options(c);
  bc.seed = c.seed;
  bc.threads = c.threads;
  bc.table_nodes = c.table_nodes;
  log << "rates-backward: " << c.n.size() << " grids, " << c.schemes.size() << " scheme(s), M = "
      << c.M << ", oracle n = " << bc.fine_n << " M = " << bc.fine_M << "\n";
  const BackwardRateResult res = run_backward_rates(setup, bc);

  const std::string kind = c.sqrt_schedule ? "err_n_eps" : "err_n";
  RunResult out;
  json pts = json::array();
  std::map<SchemeKind, std::vector<std::pair<double, double>>> dat;
  for (const auto& p : res.points) {
    CsvRow r = base_row(c, to_string(p.scheme));
    r.n = p.n;
    r.eps = p.eps;
    r.sigma_eps = p.sigma_eps;
    r.err_kind = kind;
    r.estimate = p.err.total.value;
    r.se = p.err.total.se;
    out.rows.push_back(r);
    pts.push_back({{"scheme", to_string(p.scheme)},
                   {"n", p.n},
                   {"eps", p.eps},
                   {"sigma_eps", p.sigma_eps},
                   {"err", estimate_json(p.err.total)},
                   {"y_term", p.err.y_term},
                   {"z_term", p.err.z_term},
                   {"gamma_term", p.err.gamma_term},
                   {"y0", estimate_json(p.y0)}});
    dat[p.scheme].emplace_back(p.n, p.err.total.value);
  }
  json fits = json::object();
  for (const auto& [scheme, fit] : res.fits) {
    CsvRow r = rate_row(c, to_string(scheme), "rate_" + kind, fit);
    if (!c.sqrt_schedule) r.eps = c.eps.front();
    out.rows.push_back(r);
    fits[to_string(scheme)] = fit_json(fit);
  }

  Writer w(c, "rates-backward");
  w.csv(out);
  for (const auto& [scheme, points] : dat)
    w.dat("_" + to_string(scheme) + ".dat", "log n, log " + kind, points, out);
  w.report({{"points", pts},
            {"fits", fits},
            {"oracle",
             {{"scheme", "euler"},
              {"n", res.oracle_n},
              {"M", res.oracle_M},
              {"eps", res.oracle_eps},
              {"y0", estimate_json(res.oracle_y0)}}}},
           out);
  return out;
}

RunResult holder_command(const ExperimentConfig& c, std::ostream& log) {
  require_single_n(c, "holder");
  require_single_eps(c, "holder");
  const ModelSetup setup = make_setup(c);
  require_schemes_supported(c, setup.coeffs);
  const int n = c.n.front();
  if (c.holder_divisors.size() < 3)
    throw ConfigError("holder_divisors", "need at least three gaps");
  std::vector<int> gaps;
  for (int d : c.holder_divisors) {
    if (n % d != 0)
      throw ConfigError("holder_divisors", "grid.n must be divisible by " + std::to_string(d));
    gaps.push_back(n / d);
  }
  const double eps = eps_of(c, n);
  const TruncationView view = make_truncation(*setup.model, eps);
  SimulationOptions sim;
  sim.threads = c.threads;
  sim.table_nodes = c.table_nodes;
  log << "holder: n = " << n << ", eps = " << eps << ", M = " << c.M << "\n";
  const ForwardPaths paths = simulate_forward(setup.model, view, setup.coeffs, Grid(n, c.T), c.M,
                                              NoiseSpec{c.seed, n, 0.0}, c.x0, sim);
  RunResult out;
  std::string holder_csv = "experiment_id,scheme,gap,z_sq,z_se,z_ratio,gamma_sq,gamma_se,gamma_ratio\n";
  json reps = json::array();
  std::uint64_t k = 0;
  for (SchemeKind s : c.schemes) {
    SolverOptions opt = solver_options(c);
    opt.materialize = true;
    opt.bootstrap_seed = splitmix64(c.seed + 0x9E37ull * (++k));
    const BackwardSolution sol = solve(s, paths, view, setup.coeffs, opt);
    const HolderReport rep = holder_probe(sol, gaps, splitmix64(c.seed + 0x7F4Aull * k));
    json pts = json::array();
    for (std::size_t g = 0; g < rep.points.size(); ++g) {
      const HolderPoint& p = rep.points[g];
      for (int which = 0; which < 2; ++which) {
        const Estimate& e = which == 0 ? p.z_sq : p.gamma_sq;
        CsvRow r = base_row(c, to_string(s));
        r.n = n;
        r.eps = eps;
        r.sigma_eps = view.sigma_eps;
        r.err_kind = std::string(which == 0 ? "holder_z" : "holder_gamma") + "@T/" +
                     std::to_string(c.holder_divisors[g]);
        r.estimate = e.value;
        r.se = e.se;
        out.rows.push_back(r);
      }
      holder_csv += c.experiment_id + "," + to_string(s) + "," + format_number(p.gap) + "," +
                    format_number(p.z_sq.value) + "," + format_number(p.z_sq.se) + "," +
                    format_number(p.z_sq.value / p.gap) + "," + format_number(p.gamma_sq.value) +
                    "," + format_number(p.gamma_sq.se) + "," +
                    format_number(p.gamma_sq.value / p.gap) + "\n";
      pts.push_back({{"gap", p.gap},
                     {"z_sq", estimate_json(p.z_sq)},
                     {"gamma_sq", estimate_json(p.gamma_sq)}});
    }
    CsvRow zr = rate_row(c, to_string(s), "rate_holder_z", rep.z_fit);
    CsvRow gr = rate_row(c, to_string(s), "rate_holder_gamma", rep.gamma_fit);
    zr.n = gr.n = n;
    zr.eps = gr.eps = eps;
    out.rows.push_back(zr);
    out.rows.push_back(gr);
    reps.push_back({{"scheme", to_string(s)},
                    {"points", pts},
                    {"z_fit", fit_json(rep.z_fit)},
                    {"gamma_fit", fit_json(rep.gamma_fit)}});
  }
  Writer w(c, "holder");
  w.csv(out);
  w.write(w.path("_holder.csv"), w.header() + holder_csv, out);
  w.report({{"eps", eps}, {"sigma_eps", view.sigma_eps}, {"probes", reps}}, out);
  return out;
}

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string format_row(const CsvRow& r) {
  std::string s = r.experiment_id + "," + r.scheme + ",";
  s += format_number(r.n) + "," + format_number(r.eps) + "," + format_number(r.sigma_eps) + ",";
  s += format_number(r.M) + "," + std::to_string(r.seed) + "," + r.err_kind + ",";
  s += format_number(r.estimate) + "," + format_number(r.se) + "," + format_number(r.slope) + ",";
  s += format_number(r.slope_lo) + "," + format_number(r.slope_hi);
  return s;
}

void apply_overrides(ExperimentConfig& c, const Overrides& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.threads) {
    if (*o.threads < 1 || *o.threads > 256) throw ConfigError("threads", "must lie in [1, 256]");
    c.threads = *o.threads;
  }
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.sqrt_schedule) {
    for (int n : c.n)
      if (1.0 / std::sqrt(double(n)) > c.e_max)
        throw ConfigError("schedule", "n^-1/2 exceeds model.e_max");
    c.sqrt_schedule = true;
    c.eps.clear();
    c.eps_sweep = false;
  }
  if (o.no_timestamp) c.timestamp = false;
}

RunResult run_experiment(const std::string& command, const ExperimentConfig& config,
                         std::ostream& log) {
  if (command == "rates-forward") return rates_forward(config, log);
  if (command == "solve") return solve_command(config, log);
  if (command == "rates-backward") return rates_backward(config, log);
  if (command == "holder") return holder_command(config, log);
  throw std::invalid_argument("unknown command '" + command + "'");
}

int run_command(const std::string& command, const std::string& config_path,
                const Overrides& overrides, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_config(config_path);
    apply_overrides(config, overrides);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const RunResult r = run_experiment(command, config, err);
    for (const auto& f : r.files) out << f << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: experiment " << config.experiment_id << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: experiment " << config.experiment_id << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace levyfbsde
