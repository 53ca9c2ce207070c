// flsim: federated-learning DDoS detection simulator.
//
// Subcommands map onto the scenario sections of the experiment config:
//   generate     materialize per-client datasets without training
//   train        convergence comparison across strategies
//   retrain      incremental attack onboarding
//   scalability  federation size sweep
//   analyze      feature distribution divergence report
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime error.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "flsim/config.hpp"
#include "flsim/errors.hpp"
#include "flsim/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "results";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "experiment config (TOML)")
      ->required();
  cmd->add_option("-o,--out", args.out_dir, "output directory")
      ->capture_default_str();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_flag("-q,--quiet", args.quiet, "suppress progress output");
}

flsim::ExperimentConfig load(const CommonArgs& args) {
  flsim::ExperimentConfig cfg = flsim::load_experiment_config(args.config_path);
  if (args.seed) cfg.seed = *args.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated DDoS detection simulator"};
  app.require_subcommand(1);

  CommonArgs args;
  CLI::App* generate = app.add_subcommand("generate", "write per-client datasets");
  CLI::App* train = app.add_subcommand("train", "run the convergence comparison");
  CLI::App* retrain = app.add_subcommand("retrain", "run incremental retraining");
  CLI::App* scalability =
      app.add_subcommand("scalability", "sweep the federation size");
  CLI::App* analyze =
      app.add_subcommand("analyze", "report feature distribution divergence");
  for (CLI::App* cmd : {generate, train, retrain, scalability, analyze})
    add_common(cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const flsim::ExperimentConfig cfg = load(args);
    if (generate->parsed()) flsim::cmd_generate(cfg, args.out_dir, args.quiet);
    if (train->parsed()) flsim::cmd_train(cfg, args.out_dir, args.quiet);
    if (retrain->parsed()) flsim::cmd_retrain(cfg, args.out_dir, args.quiet);
    if (scalability->parsed())
      flsim::cmd_scalability(cfg, args.out_dir, args.quiet);
    if (analyze->parsed()) flsim::cmd_analyze(cfg, args.out_dir, args.quiet);
  } catch (const flsim::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return flsim::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return flsim::exit_code(flsim::ErrorKind::Runtime);
  }
  return 0;
}
