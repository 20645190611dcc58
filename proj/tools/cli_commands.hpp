#pragma once

#include "report.hpp"
#include "vslam/checks.hpp"
#include "vslam/harness.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace CLI {
class App;
}

namespace vslam::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kIoError = 3 };

/// Every field mirrors a command-line flag and a config-file key of the same name.
struct RunConfig {
  std::string command;
  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::vector<std::size_t> landmarks;
  std::optional<double> duration;
  std::optional<double> dt;
  std::optional<std::string> estimator;  // observer | ekf | both
  std::string integrator = "geometric";
  std::string flow = "analytic";
  int jobs = 0;
  bool sequential = false;
  std::size_t samples = 1000;
  bool full = false;
  std::string preset = "compare";  // sim only: fig2 | compare
  bool noise_free = false;
  std::optional<double> range;
  std::optional<double> var_linear, var_angular, var_flow, var_bearing, var_inv_depth;
  std::optional<double> gain_bearing, gain_scale, gain_pose;
  std::optional<double> band_inner, band_outer;
  std::string inject_fault = "none";
};

/// Registers flags, the --config option and the subcommands on `app`.
void configure_app(CLI::App& app, RunConfig& config);

/// Scenario for the command after presets and overrides; throws PreconditionError.
Scenario scenario_for(const RunConfig& config);
std::vector<std::size_t> bench_counts(const RunConfig& config);
std::size_t trial_count(const RunConfig& config);

/// Effective configuration as key=value lines, readable back through --config.
std::string effective_config(const RunConfig& config);

int cmd_verify(const RunConfig& config, std::ostream& log);
int cmd_fig2(const RunConfig& config, std::ostream& log);
int cmd_compare(const RunConfig& config, std::ostream& log);
int cmd_bench(const RunConfig& config, std::ostream& log);
int cmd_sim(const RunConfig& config, std::ostream& log);

/// Dispatches on config.command and maps exceptions to exit codes.
int run_command(const RunConfig& config, std::ostream& log, std::ostream& err);

/// Parses argv and runs the selected command.
int cli_main(int argc, const char* const* argv, std::ostream& log, std::ostream& err);

/// Tables shared by the commands and the acceptance suite.
CsvTable lyapunov_table(const TrialRecord& record);
CsvTable compare_table(const SweepResult& sweep);
CsvTable bench_table(const SweepResult& sweep);
CsvTable sim_table(const TrialRecord& record);

}  // namespace vslam::cli
