// Batch front end: computes model-free price bounds from a JSON scenario
// config. Subcommands: bounds, sweep, marginals, validate.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "motbounds/scenario.hpp"

namespace {

struct CommonFlags {
  std::string out;
  std::size_t threads = 0;
  double tol = 0.0;
  std::size_t grid_cap = 0;
};

void add_common(CLI::App* cmd, std::string& config_arg, CommonFlags& flags) {
  cmd->add_option("config", config_arg, "Config file path or bundled name")->required();
  cmd->add_option("--out", flags.out, "Output directory for result files");
  cmd->add_option("--threads", flags.threads,
                  "Worker threads (default: MOTB_THREADS env var, else hardware)");
  cmd->add_option("--tol", flags.tol, "LP feasibility tolerance override");
  cmd->add_option("--grid-cap", flags.grid_cap, "Joint grid cell cap override");
}

motb::ScenarioConfig load(const std::string& config_arg, const CommonFlags& flags) {
  motb::ScenarioConfig config = motb::load_scenario_config(config_arg);
  if (flags.threads > 0) config.threads = flags.threads;
  if (flags.tol > 0.0) config.lp_options.feasibility_tol = flags.tol;
  if (flags.grid_cap > 0) config.grid_cap = flags.grid_cap;
  if (!flags.out.empty()) config.out_path = flags.out;
  return config;
}

void write_output(const motb::ScenarioConfig& config, const std::string& filename,
                  const std::string& content) {
  std::cout << content;
  if (config.out_path.empty()) return;
  std::filesystem::create_directories(config.out_path);
  const std::filesystem::path path = std::filesystem::path(config.out_path) / filename;
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw motb::RunError(motb::RunExit::input_error, "cannot write '" + path.string() + "'");
  }
  out << content;
}

int run(int argc, char** argv) {
  CLI::App app{"Model-free price bounds for multi-asset derivatives"};
  app.require_subcommand(1);

  std::string config_arg;
  CommonFlags flags;

  CLI::App* bounds = app.add_subcommand("bounds", "Solve bounds per scenario and payoff");
  add_common(bounds, config_arg, flags);
  CLI::App* sweep = app.add_subcommand("sweep", "Correlation sweep over the configured axes");
  add_common(sweep, config_arg, flags);
  CLI::App* marginals = app.add_subcommand("marginals", "Run the quote-to-marginal pipeline");
  add_common(marginals, config_arg, flags);
  CLI::App* validate = app.add_subcommand("validate", "Static checks on a config");
  add_common(validate, config_arg, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(motb::RunExit::input_error);
  }

  try {
    const motb::ScenarioConfig config = load(config_arg, flags);
    if (bounds->parsed()) {
      write_output(config, config.name + "_bounds.csv", motb::to_csv(motb::run_bounds(config)));
    } else if (sweep->parsed()) {
      write_output(config, config.name + "_sweep.csv", motb::to_csv(motb::run_sweep(config)));
    } else if (marginals->parsed()) {
      const motb::PipelineOutput result = motb::run_marginal_pipeline(config);
      std::cout << result.diagnostics;
      for (std::size_t k = 0; k < result.per_asset.size(); ++k) {
        std::ostringstream table;
        motb::write_marginal_table(table, result.per_asset[k]);
        write_output(config, config.name + "_asset" + std::to_string(k) + "_marginals.txt",
                     table.str());
      }
    } else if (validate->parsed()) {
      std::cout << motb::validate_config(config) << "config ok\n";
    }
  } catch (const motb::RunError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(motb::RunExit::numerical_failure);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
