#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "pdetime/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pdetime: long-horizon multivariate forecasting experiments"};
  app.require_subcommand(1);

  pdetime::ExperimentSpec spec;
  std::uint64_t seed = 0;
  std::string dataset, checkpoint;

  const std::map<std::string, pdetime::Command> commands = {
      {"train", pdetime::Command::Train},       {"evaluate", pdetime::Command::Evaluate},
      {"ablate", pdetime::Command::Ablate},     {"baseline", pdetime::Command::Baseline},
      {"selftest", pdetime::Command::Selftest},
  };
  const std::map<std::string, std::string> help = {
      {"train", "train the full model for every configured horizon"},
      {"evaluate", "evaluate saved checkpoints on the test split"},
      {"ablate", "train and evaluate the ablation variants"},
      {"baseline", "persistence and linear ridge-on-lookback baselines"},
      {"selftest", "run the oracle suites"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, cmd] : commands) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", spec.config_path, "configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", spec.out_dir, "output directory")->capture_default_str();
    sub->add_option("--set", spec.overrides, "override a key: section.key=value (repeatable)");
    sub->add_option("--seed", seed, "root seed (overrides train.seed)");
    sub->add_option("--dataset", dataset, "dataset CSV path, or synthetic:sinusoid");
    if (name == "evaluate") sub->add_option("--checkpoint", checkpoint, "evaluate this checkpoint only");
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    spec.command = commands.at(name);
    if (sub->count("--seed")) spec.seed = seed;
    if (sub->count("--dataset")) spec.dataset = dataset;
    if (name == "evaluate" && sub->count("--checkpoint")) spec.checkpoint = checkpoint;
  }
  return pdetime::run_experiment(spec);
}
