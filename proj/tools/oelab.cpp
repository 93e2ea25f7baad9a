// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oelab/commands.hpp"

namespace {

namespace fs = std::filesystem;
using namespace oelab;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config, "Experiment config (INI)")->required();
  sub->add_option("--out", args.out, "Output directory (default: output.dir from the config)");
  sub->add_option("--seed", args.seed, "Override run.seed");
}

ExperimentConfig resolve(const CommonArgs& args, fs::path& out) {
  ExperimentConfig c = load_config(args.config);
  if (args.seed) c = with_override(c, "run.seed", std::to_string(*args.seed));
  if (!args.out.empty()) c = with_override(c, "output.dir", args.out);
  out = c.output_dir;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier-exposure laboratory: synthetic data, shift simulation, training and evaluation"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* gen = app.add_subcommand("gen-data", "Write train/eval in/out CSV splits");
  auto* shift = app.add_subcommand("simulate-shift", "Trainable-feature distribution-shift simulation");
  auto* demo = app.add_subcommand("demo-false-likelihood", "Find a logit/likelihood disagreement pair");
  auto* train = app.add_subcommand("train", "Train backbone + head and log per-epoch metrics");
  auto* sweep = app.add_subcommand("sweep-lambda", "Train once per (criterion, gamma)");
  auto* expo = app.add_subcommand("export-features", "Dump evaluation features of a checkpoint");
  auto* ref = app.add_subcommand("config-reference", "Print every config key with its default");
  for (auto* sub : {gen, shift, demo, train, sweep, expo}) add_common(sub, args);

  std::vector<double> gammas;
  sweep->add_option("--gammas", gammas, "Gamma values (default: sweep.gammas)")->delimiter(',');
  std::string checkpoint;
  expo->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cmd::kOk : cmd::kConfigError;
  }

  try {
    if (ref->parsed()) {
      std::cout << config_reference();
      return cmd::kOk;
    }
    fs::path out;
    const ExperimentConfig c = resolve(args, out);
    if (gen->parsed()) {
      cmd::gen_data(c, out);
    } else if (shift->parsed()) {
      const auto traj = cmd::simulate_shift(c, out);
      const auto& first = traj.stats.front();
      const auto& last = traj.stats.back();
      std::cout << "mean_norm_out " << first.mean_norm_out << " -> " << last.mean_norm_out << "\n"
                << "mean_nearest_center_out " << first.mean_nearest_center_out << " -> "
                << last.mean_nearest_center_out << "\n"
                << "mean_own_center_in " << first.mean_own_center_in << " -> " << last.mean_own_center_in << "\n";
    } else if (demo->parsed()) {
      std::cout << cmd::demo_false_likelihood(c, out).dump(2) << "\n";
    } else if (train->parsed()) {
      const auto outcome = cmd::train(c, out);
      if (outcome.nonfinite_step) {
        std::cerr << "non-finite loss at step " << *outcome.nonfinite_step << "\n";
        return cmd::kNonFinite;
      }
      const auto& last = outcome.result->logs.back();
      std::cout << "acc_in " << last.acc_in << " auroc " << last.metrics.auroc << " aupr " << last.metrics.aupr
                << " fpr95 " << last.metrics.fpr95 << "\n";
    } else if (sweep->parsed()) {
      if (sweep->count("--gammas") && gammas.empty()) throw ConfigError("--gammas: empty list");
      const auto rows = cmd::sweep(c, gammas.empty() ? c.sweep_gammas : gammas, out);
      std::cout << cmd::sweep_csv(rows);
    } else if (expo->parsed()) {
      std::cout << cmd::export_features(c, checkpoint, out) << " rows\n";
    }
    return cmd::kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cmd::kConfigError;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return cmd::kIoError;
  } catch (const NonFiniteState& e) {
    std::cerr << e.what() << "\n";
    return cmd::kNonFinite;
  } catch (const NonFiniteLoss& e) {
    std::cerr << e.what() << "\n";
    return cmd::kNonFinite;
  } catch (const InvalidThreshold& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cmd::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
