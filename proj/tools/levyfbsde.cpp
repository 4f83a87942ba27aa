#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "levyfbsde/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo solver and rate harness for Levy-driven FBSDEs"};
  app.require_subcommand(1);

  std::string config;
  levyfbsde::Overrides o;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_dir;
  std::string schedule;

  auto add_run = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("config", config, "JSON experiment config")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", threads, "worker threads (results do not depend on it)");
    sub->add_option("--out", out_dir, "override the output directory");
    sub->add_option("--schedule", schedule, "eps schedule; only 'sqrt' (eps = n^-1/2)")
        ->check(CLI::IsMember({"sqrt"}));
    sub->add_flag("--no-timestamp", o.no_timestamp, "omit the timestamp header line");
    return sub;
  };
  add_run("rates-forward", "forward approximation error against sigma(eps)^2");
  add_run("solve", "solve the backward equation once and report Y0, Z0, Gamma0");
  add_run("rates-backward", "backward error sweep over n");
  add_run("holder", "mean square increments of Z and Gamma across gaps");
  app.add_subcommand("selftest", "run the built-in consistency checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : levyfbsde::kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->get_name() == "selftest") return levyfbsde::run_selftest(std::cout);

  if (sub->count("--seed")) o.seed = seed;
  if (sub->count("--threads")) o.threads = threads;
  if (sub->count("--out")) o.output_dir = out_dir;
  o.sqrt_schedule = schedule == "sqrt";
  return levyfbsde::run_command(sub->get_name(), config, o, std::cout, std::cerr);
}
