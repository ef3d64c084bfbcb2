// dlarc: summarize | train | crossval | tune
//
// Exit codes: 0 success, 2 configuration error, 1 any other failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dlarc/commands.hpp"
#include "dlarc/error.hpp"
#include "dlarc/run_config.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "dlarc_out";
  std::optional<std::string> protocol;
  std::optional<std::size_t> k;
  bool synthetic = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration or a run_manifest.json");
  cmd->add_option("--seed", f.seed, "Master seed (overrides the config)");
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_flag("--synthetic", f.synthetic, "Use generated data instead of data.directory");
}

dlarc::cli::RunConfig resolve(const Flags& f) {
  dlarc::cli::RunConfig cfg = f.config.empty() ? dlarc::cli::RunConfig{} : dlarc::cli::load_run_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.synthetic) cfg.data.use_synthetic = true;
  if (f.protocol) cfg.validation.protocol = dlarc::validate::parse_protocol(*f.protocol);
  if (f.k) cfg.validation.k = *f.k;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Activity recognition chain: windows, DeepConvLSTM training and validation protocols"};
  app.require_subcommand(1);
  Flags flags;

  auto* summarize = app.add_subcommand("summarize", "Dataset summary and class distribution");
  auto* train = app.add_subcommand("train", "Train on a hold-out split and evaluate on the validation side");
  auto* crossval = app.add_subcommand("crossval", "Cross-validate with holdout, kfold or loso");
  auto* tune = app.add_subcommand("tune", "Random search over the configured space");
  for (auto* cmd : {summarize, train, crossval, tune}) add_common(cmd, flags);
  for (auto* cmd : {train, crossval, tune}) {
    cmd->add_option("--protocol", flags.protocol, "holdout | kfold | loso");
    cmd->add_option("--k", flags.k, "Fold count for kfold");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto cfg = resolve(flags);
    if (summarize->parsed()) dlarc::cli::cmd_summarize(cfg, flags.out);
    else if (train->parsed()) dlarc::cli::cmd_train(cfg, flags.out);
    else if (crossval->parsed()) dlarc::cli::cmd_crossval(cfg, flags.out);
    else if (tune->parsed()) dlarc::cli::cmd_tune(cfg, flags.out);
  } catch (const dlarc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
