#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "mrwlab/error.hpp"
#include "mrwlab/ladder_theory.hpp"
#include "mrwlab/model.hpp"

namespace mrwlab {

struct SimulateOptions {
  std::size_t initial_state = 0;
  std::size_t n_steps = 1000;
  std::size_t replicates = 10;
  std::size_t n_ladder = 1000;
  std::size_t burn_in = 0;
  std::size_t max_steps = 10'000'000;
  // Coupling block; runs == 0 disables it.
  std::size_t coupling_runs = 0;
  std::size_t coupling_horizon = 100000;
  std::size_t coupling_first = 0;
  std::size_t coupling_second = 1;
};

struct CounterexampleOptions {
  double ratio = 0.5;
  std::size_t n_steps = 100000;
  std::size_t horizon = 10000;  // N
  double depth = 100.0;         // B
  std::size_t replicates = 2000;
};

// Parsed and range-checked run configuration. The model is resolved eagerly.
struct RunConfig {
  nlohmann::json model_source;
  std::optional<MRWSpec> model;  // unset for counterexample-only configs
  std::optional<std::uint64_t> seed;
  ExactOptions exact;
  MonteCarloOptions monte_carlo;
  SimulateOptions simulate;
  CounterexampleOptions counterexample;
};

// `base_dir` resolves relative model paths. Throws ConfigError or ModelError.
RunConfig parse_run_config(const nlohmann::json& j,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

struct ReportBundle {
  nlohmann::json report;
  std::map<std::string, std::string> tables;  // file name -> CSV text
  std::string summary;
  int exit_code = 0;
};

int exit_code_for(ErrorKind kind) noexcept;

ReportBundle cmd_validate(const RunConfig& config);
ReportBundle cmd_factorize(const RunConfig& config);
ReportBundle cmd_verify(const RunConfig& config);
ReportBundle cmd_simulate(const RunConfig& config);
ReportBundle cmd_counterexample(const RunConfig& config);

// Dispatches by name and turns library errors into an error report with the
// matching exit code.
ReportBundle run_command(const std::string& command, const RunConfig& config);

// report.json, summary.txt and one file per table.
void write_bundle(const ReportBundle& bundle, const std::filesystem::path& out_dir);

}  // namespace mrwlab
