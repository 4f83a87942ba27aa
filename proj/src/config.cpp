#include "levyfbsde/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace levyfbsde {

using nlohmann::json;

namespace {

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Typed access into one JSON object; every error names the full field path.
class Fields {
 public:
  Fields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& at(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(join(prefix_, key), "missing required field");
    return j_.at(key);
  }

  double number(const std::string& key) {
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(join(prefix_, key), "expected a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(join(prefix_, key), "must be finite");
    return x;
  }
  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }

  long long integer(const std::string& key) {
    const json& v = at(key);
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
      double x = v.get<double>();
      if (std::isfinite(x) && x == std::floor(x) && std::fabs(x) < 9.0e15)
        return static_cast<long long>(x);
    }
    throw ConfigError(join(prefix_, key), "expected an integer");
  }
  long long integer(const std::string& key, long long fallback) {
    return has(key) ? integer(key) : fallback;
  }

  std::string string(const std::string& key) {
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError(join(prefix_, key), "expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(join(prefix_, key), "expected true or false");
    return v.get<bool>();
  }

  Fields object(const std::string& key) { return Fields(at(key), join(prefix_, key)); }

  std::string path(const std::string& key) const { return join(prefix_, key); }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(join(prefix_, it.key()), "unknown field");
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

std::vector<double> number_list(const json& v, const std::string& field) {
  require(v.is_array() && !v.empty(), field, "expected a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    require(e.is_number(), field, "expected a non-empty array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<int> int_list(const json& v, const std::string& field) {
  require(v.is_array() && !v.empty(), field, "expected a non-empty array of integers");
  std::vector<int> out;
  for (const auto& e : v) {
    require(e.is_number_integer(), field, "expected a non-empty array of integers");
    long long x = e.get<long long>();
    require(x > 0 && x <= (1 << 20), field, "entries must lie in [1, 1048576]");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

void parse_model(Fields m, ExperimentConfig& c) {
  std::string family = m.string("family");
  if (family == "symmetric_stable") {
    double a = m.number("alpha");
    require(a > 0.0 && a < 2.0, m.path("alpha"), "must lie in (0, 2)");
    c.family = LevyFamily::symmetric_stable(a);
  } else if (family == "tempered_stable") {
    double a = m.number("alpha");
    double l = m.number("lambda");
    require(a > 0.0 && a < 2.0, m.path("alpha"), "must lie in (0, 2)");
    require(l > 0.0, m.path("lambda"), "must be positive");
    c.family = LevyFamily::tempered_stable(a, l);
  } else if (family == "exponential_tails") {
    double l = m.number("lambda");
    double k = m.number("c", 1.0);
    require(l > 0.0, m.path("lambda"), "must be positive");
    require(k > 0.0, m.path("c"), "must be positive");
    c.family = LevyFamily::exponential_tails(l, k);
  } else {
    throw ConfigError(m.path("family"),
                      "unknown family '" + family +
                          "' (symmetric_stable, tempered_stable, exponential_tails)");
  }
  c.e_max = m.number("e_max", 1.0);
  require(c.e_max > 0.0 && c.e_max <= 100.0, m.path("e_max"), "must lie in (0, 100]");
  c.rho_bound = m.number("rho_bound", 2.0);
  require(c.rho_bound > 0.0, m.path("rho_bound"), "must be positive");
  c.table_nodes = static_cast<int>(m.integer("table_nodes", 4096));
  require(c.table_nodes >= 64 && c.table_nodes <= (1 << 22), m.path("table_nodes"),
          "must lie in [64, 4194304]");
  if (m.has("rho")) {
    Fields r = m.object("rho");
    std::string kind = r.string("kind", "constant");
    if (kind == "constant") {
      c.rho = RhoSpec::constant(r.number("value", 1.0));
    } else if (kind == "cosine") {
      c.rho = RhoSpec::cosine(r.number("scale", 1.0), r.number("frequency", 1.0));
    } else {
      throw ConfigError(r.path("kind"), "unknown rho kind '" + kind + "' (constant, cosine)");
    }
    r.reject_unknown();
  }
  require(c.rho.sup_abs() <= c.rho_bound, m.path("rho"), "sup |rho| exceeds rho_bound");
  m.reject_unknown();
}

void parse_coefficients(Fields f, ExperimentConfig& c) {
  c.preset = f.string("preset");
  PresetParams defaults;
  try {
    defaults = preset_defaults(c.preset);
  } catch (const std::exception& e) {
    throw ConfigError(f.path("preset"), e.what());
  }
  c.preset_params = defaults;
  if (f.has("params")) {
    Fields p = f.object("params");
    for (const auto& [key, value] : defaults) {
      (void)value;
      if (p.has(key)) c.preset_params[key] = p.number(key);
    }
    p.reject_unknown();
  }
  f.reject_unknown();
}

void parse_grid(Fields g, ExperimentConfig& c) {
  c.T = g.number("T", 1.0);
  require(c.T > 0.0 && c.T <= 100.0, g.path("T"), "must lie in (0, 100]");
  bool single = g.has("n"), sweep = g.has("n_sweep");
  require(single != sweep, g.path("n"), "give exactly one of n and n_sweep");
  if (single) {
    long long n = g.integer("n");
    require(n > 0 && n <= (1 << 20), g.path("n"), "must lie in [1, 1048576]");
    c.n = {static_cast<int>(n)};
  } else {
    c.n = int_list(g.at("n_sweep"), g.path("n_sweep"));
    c.n_sweep = true;
  }
  g.reject_unknown();
}

void parse_basis(Fields b, ExperimentConfig& c) {
  std::string kind = b.string("kind", "polynomial");
  if (kind == "polynomial") {
    long long d = b.integer("degree", 4);
    require(d >= 0 && d <= 12, b.path("degree"), "must lie in [0, 12]");
    c.basis = BasisSpec::polynomial(static_cast<int>(d));
  } else if (kind == "local_partition") {
    long long k = b.integer("cells", 8);
    require(k >= 1 && k <= 4096, b.path("cells"), "must lie in [1, 4096]");
    c.basis = BasisSpec::local_partition(static_cast<int>(k));
  } else {
    throw ConfigError(b.path("kind"), "unknown basis '" + kind + "' (polynomial, local_partition)");
  }
  c.basis.guard_lo_quantile = b.number("guard_lo_quantile", 0.001);
  c.basis.guard_hi_quantile = b.number("guard_hi_quantile", 0.999);
  require(c.basis.guard_lo_quantile >= 0.0 &&
              c.basis.guard_lo_quantile < c.basis.guard_hi_quantile &&
              c.basis.guard_hi_quantile <= 1.0,
          b.path("guard_lo_quantile"), "need 0 <= guard_lo_quantile < guard_hi_quantile <= 1");
  b.reject_unknown();
}

void parse_reference(Fields r, ExperimentConfig& c) {
  c.refinement = static_cast<int>(r.integer("refinement", c.refinement));
  require(c.refinement >= 8 && c.refinement <= 1024, r.path("refinement"), "must lie in [8, 1024]");
  c.fine_n = static_cast<int>(r.integer("fine_n", c.fine_n));
  require(c.fine_n >= 1 && c.fine_n <= (1 << 20), r.path("fine_n"), "must lie in [1, 1048576]");
  c.fine_M_factor = r.integer("fine_M_factor", c.fine_M_factor);
  require(c.fine_M_factor >= 4 && c.fine_M_factor <= 64, r.path("fine_M_factor"),
          "must lie in [4, 64]");
  c.delta_fraction = r.number("delta_fraction", c.delta_fraction);
  require(c.delta_fraction > 0.0 && c.delta_fraction <= 0.125, r.path("delta_fraction"),
          "must lie in (0, 1/8]");
  r.reject_unknown();
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Fields top(j, "");

  c.experiment_id = top.string("experiment_id", c.experiment_id);
  require(!c.experiment_id.empty() &&
              c.experiment_id.find_first_of(",\"\n\r/\\") == std::string::npos,
          "experiment_id", "must be non-empty without commas, quotes, slashes or newlines");

  parse_model(top.object("model"), c);
  parse_coefficients(top.object("coefficients"), c);
  parse_grid(top.object("grid"), c);

  long long M = top.integer("M");
  require(M >= 2 && M <= 100000000LL, "M", "must lie in [2, 1e8]");
  c.M = static_cast<Index>(M);

  int given = int(top.has("eps")) + int(top.has("eps_sweep")) + int(top.has("schedule"));
  require(given <= 1, "schedule", "eps, eps_sweep and schedule are mutually exclusive");
  require(given == 1, "eps", "missing required field (or eps_sweep, or schedule)");
  if (top.has("eps")) {
    double e = top.number("eps");
    require(e > 0.0 && e <= c.e_max, "eps", "must lie in (0, model.e_max]");
    c.eps = {e};
  } else if (top.has("eps_sweep")) {
    c.eps = number_list(top.at("eps_sweep"), "eps_sweep");
    for (double e : c.eps) require(e > 0.0 && e <= c.e_max, "eps_sweep", "entries must lie in (0, model.e_max]");
    c.eps_sweep = true;
  } else {
    std::string s = top.string("schedule");
    require(s == "sqrt", "schedule", "only \"sqrt\" (eps = n^-1/2) is supported");
    c.sqrt_schedule = true;
    for (int n : c.n)
      require(1.0 / std::sqrt(double(n)) <= c.e_max, "schedule", "n^-1/2 exceeds model.e_max");
  }

  c.x0 = top.number("x0", c.x0);
  if (top.has("basis")) parse_basis(top.object("basis"), c);

  c.scheme_selector = top.string("scheme", c.scheme_selector);
  if (c.scheme_selector == "both") {
    c.schemes = {SchemeKind::Euler, SchemeKind::Malliavin};
  } else if (c.scheme_selector == "euler" || c.scheme_selector == "malliavin") {
    c.schemes = {parse_scheme(c.scheme_selector)};
  } else {
    throw ConfigError("scheme", "expected euler, malliavin or both");
  }

  std::string gamma = top.string("gamma_convention", to_string(c.gamma));
  try {
    c.gamma = parse_gamma_convention(gamma);
  } catch (const std::exception& e) {
    throw ConfigError("gamma_convention", e.what());
  }

  long long seed = top.integer("seed", 1);
  require(seed >= 0, "seed", "must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  c.threads = static_cast<int>(top.integer("threads", 1));
  require(c.threads >= 1 && c.threads <= 256, "threads", "must lie in [1, 256]");
  c.output_dir = top.string("output_dir", c.output_dir);
  c.timestamp = top.boolean("timestamp", true);

  if (top.has("reference")) parse_reference(top.object("reference"), c);
  if (top.has("holder_divisors")) {
    c.holder_divisors = int_list(top.at("holder_divisors"), "holder_divisors");
    for (int d : c.holder_divisors) require(d >= 2, "holder_divisors", "entries must be at least 2");
  }

  top.reject_unknown();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("", path + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment_id"] = c.experiment_id;

  json m;
  switch (c.family.kind) {
    case LevyFamily::Kind::SymmetricStable:
      m["family"] = "symmetric_stable";
      m["alpha"] = c.family.alpha;
      break;
    case LevyFamily::Kind::TemperedStable:
      m["family"] = "tempered_stable";
      m["alpha"] = c.family.alpha;
      m["lambda"] = c.family.lambda;
      break;
    case LevyFamily::Kind::ExponentialTails:
      m["family"] = "exponential_tails";
      m["lambda"] = c.family.lambda;
      m["c"] = c.family.c;
      break;
  }
  m["e_max"] = c.e_max;
  m["rho_bound"] = c.rho_bound;
  m["table_nodes"] = c.table_nodes;
  if (c.rho.kind == RhoSpec::Kind::Constant)
    m["rho"] = {{"kind", "constant"}, {"value", c.rho.scale}};
  else
    m["rho"] = {{"kind", "cosine"}, {"scale", c.rho.scale}, {"frequency", c.rho.frequency}};
  j["model"] = m;

  json params = json::object();
  for (const auto& [k, v] : c.preset_params) params[k] = v;
  j["coefficients"] = {{"preset", c.preset}, {"params", params}};

  json g;
  g["T"] = c.T;
  if (c.n_sweep)
    g["n_sweep"] = c.n;
  else
    g["n"] = c.n.front();
  j["grid"] = g;

  if (c.sqrt_schedule)
    j["schedule"] = "sqrt";
  else if (c.eps_sweep)
    j["eps_sweep"] = c.eps;
  else
    j["eps"] = c.eps.front();

  j["M"] = c.M;
  j["x0"] = c.x0;
  json b;
  if (c.basis.kind == BasisSpec::Kind::Polynomial) {
    b["kind"] = "polynomial";
    b["degree"] = c.basis.degree;
  } else {
    b["kind"] = "local_partition";
    b["cells"] = c.basis.cells;
  }
  b["guard_lo_quantile"] = c.basis.guard_lo_quantile;
  b["guard_hi_quantile"] = c.basis.guard_hi_quantile;
  j["basis"] = b;
  j["scheme"] = c.scheme_selector;
  j["gamma_convention"] = to_string(c.gamma);
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  j["timestamp"] = c.timestamp;
  j["reference"] = {{"refinement", c.refinement},
                    {"fine_n", c.fine_n},
                    {"fine_M_factor", c.fine_M_factor},
                    {"delta_fraction", c.delta_fraction}};
  j["holder_divisors"] = c.holder_divisors;
  return j;
}

ModelSetup make_setup(const ExperimentConfig& c) {
  ModelSetup s;
  s.model = std::make_shared<LevyModel>(c.family, c.rho, c.rho_bound, c.e_max);
  s.coeffs = make_preset(c.preset, c.preset_params);
  s.x0 = c.x0;
  s.T = c.T;
  return s;
}

}  // namespace levyfbsde
