#pragma once

#include "oslab/config.hpp"
#include "oslab/report.hpp"

#include <optional>
#include <string>

namespace oslab {

inline constexpr const char* kOutputRootEnv = "OSLAB_OUTPUT_ROOT";

// $OSLAB_OUTPUT_ROOT, or "oslab-output" in the working directory.
std::string output_root();

// Runs a validated configuration end to end and writes tables, plots and
// report.json into out_dir (default: output_root()/<output or experiment>).
// Numeric failures mid-run yield a partial report with `failure` set.
ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::optional<std::string>& out_dir = std::nullopt);

// 0 when every verdict passed, 1 otherwise.
int exit_code(const ExperimentReport& report);

}  // namespace oslab
