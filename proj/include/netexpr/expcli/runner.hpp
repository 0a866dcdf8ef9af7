#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "netexpr/expcli/config.hpp"
#include "netexpr/expcli/output.hpp"

namespace netexpr::cli {

inline constexpr std::string_view kToolkitVersion = "1.0.0";

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNonConvergence = 3, kExitIo = 4 };

struct RunOptions {
  bool overwrite = false;
  std::ostream* log = nullptr;  // progress lines; nullptr = quiet
};

struct RunResult {
  int exit_code = kExitOk;
  RunManifest manifest;
};

// Runs one experiment into config.out and writes its manifest. Flagged
// non-convergence or divergence still writes every output and the manifest,
// and returns kExitNonConvergence. Other failures throw (ConfigError,
// IoError, or module exceptions).
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// Re-emits plot-ready series derived from a finished experiment directory.
RunResult run_plot_data(const std::filesystem::path& in, const std::filesystem::path& out,
                        const RunOptions& options = {});

}  // namespace netexpr::cli
