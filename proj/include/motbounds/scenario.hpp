#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "motbounds/dependence.hpp"
#include "motbounds/market_data.hpp"
#include "motbounds/mot_lp.hpp"

namespace motb {

/// Process exit codes of the batch front end.
enum class RunExit : int { ok = 0, infeasible = 2, input_error = 3, numerical_failure = 4 };

/// Error carrying the exit code it should map to.
class RunError : public std::runtime_error {
 public:
  RunError(RunExit code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  RunExit code() const { return code_; }

 private:
  RunExit code_;
};

struct LabeledPayoff {
  std::string label;
  PayoffSpec spec;
};

/// Correlation sweep: one correlation pin between assets k and l per listed
/// maturity, swept over the cartesian product of the per-maturity value
/// lists.
struct SweepAxes {
  std::size_t k = 0, l = 1;
  std::vector<std::size_t> maturities;
  std::vector<std::vector<double>> rho_values;  // one list per maturity
};

struct MarginalSource {
  enum class Kind { inline_atoms, quote_files, bs_synthetic };
  Kind kind = Kind::inline_atoms;

  // inline_atoms
  std::size_t maturities = 0, assets = 0;
  std::vector<std::vector<double>> atoms;    // maturity-major, one list per axis
  std::vector<std::vector<double>> weights;  // empty inner list = uniform
  std::vector<double> spots;

  // quote_files
  std::vector<std::string> quote_files;

  // bs_synthetic
  BSModelSpec model;
  std::size_t synthetic_strikes = 50;

  // quantization width for bs/quote sources (pipeline default 20)
  std::size_t quantize_atoms = 20;
};

/// A scenario block that derives a common-component q2 from model digital
/// prices: pairwise digital quotes at the listed strikes are mapped to
/// survival-copula prescriptions, improved Fréchet upper bounds are built per
/// asset pair and combined by pointwise maximum. Requires a bs marginal
/// source; rho overrides every off-diagonal model correlation.
struct CcdFromDigitals {
  std::size_t maturity = 0;
  std::vector<double> strikes;
  double rho = 0.0;
};

struct ConfigScenario {
  DependenceScenario dependence;
  std::optional<CcdFromDigitals> ccd_from_digitals;
};

struct ScenarioConfig {
  std::string name;
  MarginalSource marginals;
  std::vector<LabeledPayoff> payoffs;
  std::vector<ConfigScenario> scenarios;

  enum class Sides { lower, upper, both };
  Sides sides = Sides::both;
  SimplexOptions lp_options;
  std::size_t grid_cap = 5000000;
  std::size_t threads = 0;  // 0 = MOTB_THREADS env var, else hardware
  bool report_timing = false;  // false keeps CSV byte-stable
  std::string out_path;

  std::optional<SweepAxes> sweep;
};

/// Parses a JSON config document. Throws RunError(input_error) on schema or
/// value problems.
ScenarioConfig parse_scenario_config(const std::string& json_text);

/// Loads a config from a file path, falling back to a bundled config when
/// the argument names one ("table1", "example42", "example43").
ScenarioConfig load_scenario_config(const std::string& path_or_name);

/// JSON text of a bundled config; throws RunError(input_error) for unknown
/// names.
const std::string& bundled_config(const std::string& name);
std::vector<std::string> bundled_config_names();

struct ResultRow {
  std::string payoff;
  std::string scenario;
  std::string side;  // "lower" | "upper" | "analytic_upper"
  double value = 0.0;
  std::string status;
  double seconds = 0.0;
};

struct ResultTable {
  std::vector<ResultRow> rows;  // sorted by (payoff, scenario, side)
};

/// CSV with header (payoff,scenario,side,value,status,seconds), floats at 10
/// significant digits. Byte-stable for a fixed config (timing column is
/// zeroed unless report_timing is set).
std::string to_csv(const ResultTable& table);

/// Builds the marginal system declared by the config (inline atoms directly;
/// bs/quote sources through the quantization pipeline).
MarginalSystem build_marginal_system(const ScenarioConfig& config);

/// Solves every scenario x payoff pair on the configured grid, emitting
/// lower/upper rows plus analytic_upper rows where a scenario carries a CCD
/// or upper-orthant box block that matches the payoff shape. Throws
/// RunError(infeasible) with the feasibility_check report when a scenario is
/// inconsistent, RunError(numerical_failure) on solver breakdown.
ResultTable run_bounds(const ScenarioConfig& config);

/// Correlation sweep over the configured axes; infeasible grid points are
/// flagged in the status column instead of aborting the sweep.
ResultTable run_sweep(const ScenarioConfig& config);

struct PipelineOutput {
  /// Per asset, rows of (maturity identifier, quantized marginal).
  std::vector<std::vector<std::pair<std::size_t, DiscreteMarginal>>> per_asset;
  std::vector<double> target_means;  // one per asset, post equalization
  std::string diagnostics;
};

/// Quote-to-marginal pipeline: parse -> clean -> density extraction ->
/// normalization -> mean equalization -> u-quantization. Stage failures are
/// rethrown as RunError with the stage name prefixed; a convex-order
/// violation after equalization is an input error carrying the report.
PipelineOutput run_marginal_pipeline(const ScenarioConfig& config);

/// Static checks: builds the system, the grid and every scenario's rows.
/// Returns a human-readable summary; throws RunError on any problem.
std::string validate_config(const ScenarioConfig& config);

/// Common-component q2 for a CcdFromDigitals block (also used directly by
/// the acceptance suite): reflected pointwise-max of per-pair improved
/// Fréchet upper bounds prescribed by the model's pairwise digital prices.
QuasiCopula q2_from_digital_prescriptions(const BSModelSpec& model, std::size_t maturity,
                                          const std::vector<double>& strikes, double rho);

}  // namespace motb
