#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "levyfbsde/commands.hpp"

using namespace levyfbsde;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("levyfbsde_cli_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

json base(const fs::path& dir, const std::string& id = "t") {
  return {{"experiment_id", id},
          {"model", {{"family", "symmetric_stable"}, {"alpha", 0.8}}},
          {"coefficients", {{"preset", "linear_bsde"}}},
          {"grid", {{"T", 1.0}, {"n_sweep", {4, 8, 16}}}},
          {"eps", 0.2},
          {"M", 500},
          {"scheme", "both"},
          {"reference", {{"fine_n", 128}}},
          {"output_dir", dir.string()},
          {"timestamp", false}};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> cells(const std::string& row) {
  std::vector<std::string> out;
  std::istringstream in(row);
  for (std::string c; std::getline(in, c, ',');) out.push_back(c);
  return out;
}

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::string& cmd, const json& j, const fs::path& file, const Overrides& o = {}) {
  std::ofstream(file) << j.dump(2);
  std::ostringstream out, err;
  const int code = run_command(cmd, file.string(), o, out, err);
  return {code, out.str(), err.str()};
}

std::string config_field(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults and the echoed configuration") {
  TempDir d;
  const ExperimentConfig c = parse_config(base(d.path));
  CHECK(c.n == std::vector<int>{4, 8, 16});
  CHECK(c.n_sweep);
  CHECK(c.schemes.size() == 2);
  CHECK(c.seed == 1);
  CHECK(c.threads == 1);
  CHECK(c.gamma == GammaConvention::MarkWeighted);
  CHECK(c.refinement == 8);
  CHECK(c.holder_divisors == std::vector<int>{4, 8, 16});
  const json echo = to_json(c);
  CHECK(to_json(parse_config(echo)) == echo);
}

TEST_CASE("configuration errors name the field") {
  TempDir d;
  json j = base(d.path);
  j.erase("M");
  CHECK(config_field(j) == "M");
  CHECK_THROWS_WITH(parse_config(j), doctest::Contains("config field 'M'"));

  j = base(d.path);
  j["schedule"] = "sqrt";
  CHECK(config_field(j) == "schedule");

  j = base(d.path);
  j["colour"] = "red";
  CHECK(config_field(j) == "colour");

  j = base(d.path);
  j["model"]["alpha"] = 2.5;
  CHECK(config_field(j) == "model.alpha");

  j = base(d.path);
  j["model"]["family"] = "gamma";
  CHECK(config_field(j) == "model.family");

  j = base(d.path);
  j["grid"]["n"] = 8;
  CHECK_FALSE(config_field(j).empty());
}

TEST_CASE("syntax errors and missing files exit with the config code") {
  TempDir d;
  const fs::path bad = d.path / "bad.json";
  std::ofstream(bad) << "{\n  \"M\": 10,\n  oops\n}";
  std::ostringstream out, err;
  CHECK(run_command("solve", bad.string(), {}, out, err) == kExitConfig);
  CHECK(err.str().find("line") != std::string::npos);
  std::ostringstream out2, err2;
  CHECK(run_command("solve", (d.path / "absent.json").string(), {}, out2, err2) == kExitConfig);
}

TEST_CASE("number formatting") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(-std::nan("")) == "nan");
  CHECK(format_number(8.0) == "8");
  CsvRow r;
  r.experiment_id = "x";
  r.scheme = "euler";
  r.n = 8;
  r.err_kind = "err_n";
  CHECK(cells(format_row(r)).size() == cells(kCsvHeader).size());
}

TEST_CASE("backward rates CSV") {
  TempDir d;
  Overrides o;
  o.seed = 42;
  const Run r = run("rates-backward", base(d.path, "rb"), d.path / "rb.in", o);
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto rows = lines(slurp(d.path / "rb.csv"));
  REQUIRE(rows.size() == 1 + 6 + 2);
  CHECK(rows[0] == kCsvHeader);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto c = cells(rows[k]);
    REQUIRE(c.size() == 13);
    CHECK(c[0] == "rb");
    CHECK(c[6] == "42");
  }
  CHECK(cells(rows[1])[7] == "err_n");
  CHECK(cells(rows.back())[7].rfind("rate_", 0) == 0);
  CHECK(fs::exists(d.path / "rb.json"));
  CHECK(fs::exists(d.path / "rb_euler.dat"));

  // the echoed configuration reproduces the run byte for byte
  const json echoed = json::parse(slurp(d.path / "rb.json"))["config"];
  const std::string first = slurp(d.path / "rb.csv");
  REQUIRE(run("rates-backward", echoed, d.path / "rb2.in").code == kExitOk);
  CHECK(slurp(d.path / "rb.csv") == first);
}

TEST_CASE("sqrt schedule override sets eps from n") {
  TempDir d;
  json j = base(d.path, "sq");
  j["scheme"] = "euler";
  j["reference"] = {{"fine_n", 128}, {"delta_fraction", 0.125}};
  Overrides o;
  o.sqrt_schedule = true;
  const Run r = run("rates-backward", j, d.path / "sq.in", o);
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto rows = lines(slurp(d.path / "sq.csv"));
  REQUIRE(rows.size() == 1 + 3 + 1);
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto c = cells(rows[k]);
    CHECK(c[7] == "err_n_eps");
    CHECK(std::stod(c[3]) == doctest::Approx(1.0 / std::sqrt(std::stod(c[2]))).epsilon(1e-15));
  }
}

TEST_CASE("solve rows") {
  TempDir d;
  json j = base(d.path, "sv");
  j["grid"] = {{"T", 1.0}, {"n", 8}};
  const Run r = run("solve", j, d.path / "sv.in");
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto rows = lines(slurp(d.path / "sv.csv"));
  REQUIRE(rows.size() == 1 + 6);
  CHECK(cells(rows[1])[7] == "y0");
  CHECK(cells(rows[2])[7] == "z0");
  CHECK(cells(rows[3])[7] == "gamma0");
  CHECK(cells(rows[4])[1] == "malliavin");
}

TEST_CASE("holder output") {
  TempDir d;
  json j = base(d.path, "hd");
  j["grid"] = {{"T", 1.0}, {"n", 16}};
  j["scheme"] = "malliavin";
  const Run r = run("holder", j, d.path / "hd.in");
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto h = lines(slurp(d.path / "hd_holder.csv"));
  REQUIRE(h.size() == 4);
  CHECK(h[0] == "experiment_id,scheme,gap,z_sq,z_se,z_ratio,gamma_sq,gamma_se,gamma_ratio");
  CHECK(std::stod(cells(h[1])[2]) == doctest::Approx(0.25));
  const auto rows = lines(slurp(d.path / "hd.csv"));
  int holder_rows = 0;
  for (const auto& row : rows) holder_rows += row.find(",holder_z@") != std::string::npos;
  CHECK(holder_rows == 3);
}

TEST_CASE("runtime failures exit with the runtime code and name the experiment") {
  TempDir d;
  json j = base(d.path, "blowup");
  j["grid"] = {{"T", 1.0}, {"n", 8}};
  j["scheme"] = "malliavin";
  j["coefficients"] = {{"preset", "linear_bsde"}, {"params", {{"f2", 800.0}}}};
  const Run r = run("solve", j, d.path / "b.in");
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("blowup") != std::string::npos);
  CHECK(r.err.find("overflow") != std::string::npos);

  json e = base(d.path, "coupled");
  e["grid"] = {{"T", 1.0}, {"n", 8}};
  e["scheme"] = "malliavin";
  e["coefficients"] = {{"preset", "lipschitz_smooth"}, {"params", {{"x_coupling", 0.5}}}};
  const Run c = run("solve", e, d.path / "c.in");
  CHECK(c.code == kExitConfig);
  CHECK(c.err.find("scheme") != std::string::npos);
}
