#include "pwass/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Piecewise affine state-space simulation and identification"};
  app.require_subcommand(1);

  std::string config_path;
  pwass::ConfigOverrides ov;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON file")
        ->required();
    cmd->add_option("--seed", ov.seed, "master seed (overrides config)");
    cmd->add_option("--realizations", ov.realizations,
                    "number of identification realizations");
    cmd->add_option("--iterations", ov.iterations, "EM iterations");
    cmd->add_option("--trajectories", ov.trajectories,
                    "Monte-Carlo regime trajectories per E-step");
    cmd->add_option("--workers", ov.workers, "worker thread count");
    cmd->add_option("--out", ov.out,
                    "output directory (default: config 'out', then $PWASS_OUT)");
  };

  CLI::App* sim = app.add_subcommand(
      "simulate", "simulate one trajectory and write it as CSV");
  CLI::App* idf = app.add_subcommand(
      "identify", "run EM identification realizations and summarize");
  CLI::App* rep = app.add_subcommand(
      "report", "compute error metrics from an identify summary");
  add_common(sim);
  add_common(idf);
  add_common(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const char* env_out = std::getenv("PWASS_OUT");
  const std::string default_out = env_out ? env_out : "out";

  try {
    const pwass::ExperimentConfig cfg =
        pwass::load_experiment(config_path, ov, default_out);
    if (sim->parsed()) return pwass::run_simulate(cfg);
    if (idf->parsed()) return pwass::run_identify(cfg);
    return pwass::run_report(cfg);
  } catch (const pwass::StructuralError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
