#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"

using namespace dpm::cli;

int main(int argc, char** argv) {
  CLI::App app{"Dynamic fixed-effects logit panels: moment functions, GMM and counterfactuals"};
  app.require_subcommand(1);
  std::string config_path;
  std::string seed, n, reps, out_dir, threads, p, T;
  std::vector<std::string> sets;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value configuration file");
    sub->add_option("--seed", seed, "override seed");
    sub->add_option("--n", n, "override data.N");
    sub->add_option("--reps", reps, "override montecarlo.reps");
    sub->add_option("--out", out_dir, "override output.dir");
    sub->add_option("--threads", threads, "override threads");
    sub->add_option("--set", sets, "override any key: --set model.T=4")->allow_extra_args(false);
  };
  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name, name == "ame" ? "average marginal effects and transition probabilities"
                                             : name == "count" ? "count and list the valid moment functions"
                                             : name == "verify" ? "oracle checks for the configured model"
                                             : name == "simulate" ? "simulate a panel from the design block"
                                             : name == "estimate" ? "GMM estimation"
                                                                  : "Monte Carlo bias and MAE table");
    add_common(sub);
    if (name == "count") {
      sub->add_option("--p", p, "override model.p");
      sub->add_option("--T", T, "override model.T");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: ConfigError: " << e.what() << "\n";
    return kConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Config cfg;
  try {
    if (!config_path.empty()) cfg = Config::load(config_path);
    auto over = [&](const std::string& key, const std::string& v) {
      if (!v.empty()) cfg.set(key, v);
    };
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    over("seed", seed);
    over("data.N", n);
    over("montecarlo.reps", reps);
    over("output.dir", out_dir);
    over("threads", threads);
    over("model.p", p);
    over("model.T", T);
  } catch (const ConfigError& e) {
    std::cerr << "error: ConfigError: " << e.what() << "\n";
    return kConfigError;
  }
  return run_command(command, cfg, std::cout, std::cerr);
}
