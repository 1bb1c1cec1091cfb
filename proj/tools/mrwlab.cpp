#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mrwlab/reports.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mrwlab: ladder variables of Markov random walks"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::int64_t> depth;
  std::optional<double> tol;
  std::optional<std::int64_t> max_depth;
  bool print_json = false;

  const char* commands[][2] = {
      {"validate", "Validate a model; report pi and the stationary drift"},
      {"factorize", "Compute ladder kernels and check the Wiener-Hopf factorization"},
      {"verify", "Run the full identity suite (exact pipeline and Monte Carlo)"},
      {"simulate", "Simulate paths and report ladder statistics"},
      {"counterexample", "Audit the flower chain and its dual"},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c[0], c[1]);
    sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "Top-level seed (overrides the config)");
    sub->add_option("--out", out_dir, "Directory for report.json, summary.txt and CSVs");
    sub->add_option("--K", depth, "Initial truncation depth");
    sub->add_option("--tol", tol, "Truncation defect tolerance");
    sub->add_option("--K-max", max_depth, "Largest truncation depth");
    sub->add_flag("--json", print_json, "Print report.json to stdout");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  mrwlab::RunConfig config;
  try {
    config = mrwlab::load_run_config(config_path);
    if (seed) config.seed = *seed;
    if (depth) {
      if (*depth < 0) throw mrwlab::ConfigError("--K must be >= 0");
      config.exact.truncation.initial_depth = *depth;
    }
    if (tol) {
      if (!(*tol > 0.0 && *tol < 1.0)) throw mrwlab::ConfigError("--tol must lie in (0, 1)");
      config.exact.truncation.tol = *tol;
    }
    if (max_depth) {
      if (*max_depth < 1) throw mrwlab::ConfigError("--K-max must be >= 1");
      config.exact.truncation.max_depth = *max_depth;
    }
  } catch (const mrwlab::Error& e) {
    std::cerr << "mrwlab: " << e.what() << "\n";
    return mrwlab::exit_code_for(e.kind());
  }

  const mrwlab::ReportBundle bundle = mrwlab::run_command(command, config);
  if (!out_dir.empty()) {
    try {
      mrwlab::write_bundle(bundle, out_dir);
    } catch (const std::exception& e) {
      std::cerr << "mrwlab: " << e.what() << "\n";
      return 2;
    }
  }
  if (print_json) {
    std::cout << bundle.report.dump(2) << "\n";
  } else {
    std::cout << bundle.summary;
  }
  return bundle.exit_code;
}
