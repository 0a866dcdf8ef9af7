#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "netexpr/expcli/runner.hpp"
#include "netexpr/netcore.hpp"

namespace cli = netexpr::cli;

namespace {

struct KindOptions {
  std::string config;
  std::map<std::string, std::string> flags;  // schema key -> raw text
};

std::string describe(const cli::KeySpec& spec) {
  std::string text = spec.help;
  if (!spec.choices.empty()) {
    text += " {";
    for (std::size_t i = 0; i < spec.choices.size(); ++i) text += (i ? "|" : "") + spec.choices[i];
    text += "}";
  }
  if (!spec.default_value) text += " (required)";
  return text;
}

std::string summary(cli::ExperimentKind kind) {
  switch (kind) {
    case cli::ExperimentKind::TrajGrowth: return "Per-layer trajectory length of random networks over a (k, sigma_w2, sigma_b2, depth) grid";
    case cli::ExperimentKind::Transitions: return "Neuron transitions versus trajectory length, with a per-configuration linear fit";
    case cli::ExperimentKind::Regions: return "Count linear regions on a 2-D input window";
    case cli::ExperimentKind::Boundaries: return "Extract per-neuron region boundaries on a 2-D input window";
    case cli::ExperimentKind::Dichotomies: return "Count distinct labelings of a fixed point set under layer or full resampling";
    case cli::ExperimentKind::TrainTraj: return "Train on MNIST/CIFAR-10 and record probe trajectory lengths at checkpoints";
    case cli::ExperimentKind::TrainFreeze: return "Train exactly one layer at a time from a shared initialisation";
  }
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"netexpr: expressivity experiments on random and trained networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cli::kToolkitVersion));

  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool overwrite = false;
  bool quiet = false;

  std::map<cli::ExperimentKind, KindOptions> per_kind;
  std::map<cli::ExperimentKind, CLI::App*> commands;
  for (const auto kind : cli::all_kinds()) {
    auto* sub = app.add_subcommand(std::string(cli::to_string(kind)), summary(kind));
    auto& opts = per_kind[kind];
    sub->add_option("--config", opts.config, "YAML file with a flat key: value mapping")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Base seed (default 0)");
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--threads", threads, "Worker threads (results do not depend on this)")->check(CLI::PositiveNumber);
    sub->add_flag("--overwrite", overwrite, "Replace the contents of a non-empty output directory");
    sub->add_flag("-q,--quiet", quiet, "No progress lines on stderr");
    for (const auto& spec : cli::schema(kind))
      sub->add_option("--" + cli::flag_name(spec.name), opts.flags[spec.name], describe(spec));
    commands[kind] = sub;
  }

  std::string plot_in, plot_out;
  auto* plot = app.add_subcommand("plot-data", "Derive plot-ready series from a finished experiment directory");
  plot->add_option("--in", plot_in, "Experiment output directory")->required()->check(CLI::ExistingDirectory);
  plot->add_option("--out", plot_out, "Directory for plot_*.csv")->required();
  plot->add_flag("--overwrite", overwrite, "Replace the contents of a non-empty output directory");
  plot->add_flag("-q,--quiet", quiet, "No progress lines on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitConfig;
  }

  cli::RunOptions options;
  options.overwrite = overwrite;
  options.log = quiet ? nullptr : &std::cerr;

  try {
    cli::RunResult result;
    if (plot->parsed()) {
      result = cli::run_plot_data(plot_in, plot_out, options);
    } else {
      for (const auto& [kind, sub] : commands) {
        if (!sub->parsed()) continue;
        const auto& opts = per_kind[kind];
        // Precedence: defaults < --config file < flags.
        cli::Overrides overrides;
        for (const auto& spec : cli::schema(kind))
          if (sub->count("--" + cli::flag_name(spec.name)) > 0) overrides.emplace_back(spec.name, opts.flags.at(spec.name));
        if (seed) overrides.emplace_back("seed", std::to_string(*seed));
        if (threads) overrides.emplace_back("threads", std::to_string(*threads));
        if (!out.empty()) overrides.emplace_back("out", out);
        const auto config = cli::build_config(
            kind, opts.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(opts.config), overrides);
        result = cli::run_experiment(config, options);
      }
    }
    if (result.exit_code != cli::kExitOk)
      std::cerr << "netexpr: finished with status '" << result.manifest.status << "'\n";
    return result.exit_code;
  } catch (const cli::ConfigError& e) {
    std::cerr << "netexpr: configuration error: " << e.what() << '\n';
    return cli::kExitConfig;
  } catch (const cli::IoError& e) {
    std::cerr << "netexpr: I/O error: " << e.what() << '\n';
    return cli::kExitIo;
  } catch (const std::invalid_argument& e) {
    // Parameter checks inside the library (shapes, variances, tolerances).
    std::cerr << "netexpr: invalid parameters: " << e.what() << '\n';
    return cli::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "netexpr: error: " << e.what() << '\n';
    return 1;
  }
}
