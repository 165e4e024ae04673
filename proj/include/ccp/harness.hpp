#pragma once

// Experiment orchestration: per-seed pipelines over scenarios, interventions
// and significance levels, ITE interval composition and result export.

#include <cstdint>
#include <string>
#include <vector>

#include "ccp/core.hpp"
#include "ccp/io.hpp"
#include "ccp/models.hpp"
#include "ccp/shift_unknown.hpp"
#include "ccp/synthdata.hpp"

namespace ccp {

enum class Scenario { known_propensity, unknown_propensity, mc_dropout };

const char* to_string(Scenario scenario) noexcept;
// Accepts "known-propensity" / "known", "unknown-propensity" / "unknown",
// "mc-dropout-baseline" / "mc-dropout".
Scenario parse_scenario(const std::string& text);

struct SolverParams {
  double error_bound = default_error_bound;
  SigmaBounds sigma_bounds{0.0, 0.0};  // unset: derived from calibration treatments
  double epsilon = 1e-3;
  int sigma_grid = 50;
};

struct ExperimentConfig {
  int dataset_id = 1;
  std::string csv_path;  // user data instead of the generator when non-empty
  SplitFractions fractions;
  GeneratorSpec generator;  // seed is replaced per run
  std::vector<Scenario> scenarios{Scenario::unknown_propensity};
  std::vector<Intervention> interventions;
  std::vector<double> alphas{0.05, 0.1, 0.2};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  SolverParams solver;
  MlpConfig mlp;
  ConditionalDensityConfig density;
  int mc_samples = 100;
  std::string output_dir;
  bool keep_intervals = false;  // keep every interval of the first seed
  int workers = 0;              // 0: one per hardware thread
  bool verbose = false;

  void validate() const;
};

// Keys mirror the CLI flags; missing keys keep their defaults.
ExperimentConfig config_from_json_text(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_experiment_config(const std::string& path, ExperimentConfig base = {});

struct CoverageCell {
  Scenario scenario = Scenario::unknown_propensity;
  std::string intervention;
  double alpha = 0.1;
  std::uint64_t seed = 0;
  double coverage = 0.0;
  double width = 0.0;
  double runtime = 0.0;  // seconds for all test points of the cell
  int n_test = 0;
  std::string error;  // non-empty marks an incomplete cell

  bool ok() const noexcept { return error.empty(); }
};

struct IntervalRecord {
  std::vector<double> x;
  double a = 0.0;  // intervened treatment
  double center = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double y_true = 0.0;  // potential outcome the interval is scored against
  double alpha = 0.1;
  std::string method;
};

struct SeedDiagnostics {
  std::uint64_t seed = 0;
  double test_mse = 0.0;
  double final_train_loss = 0.0;
  double final_validation_loss = 0.0;
  std::string error;
};

struct AggregateCell {
  Scenario scenario = Scenario::unknown_propensity;
  std::string intervention;
  double alpha = 0.1;
  double mean_coverage = 0.0;
  double sd_coverage = 0.0;
  double mean_width = 0.0;
  double mean_runtime = 0.0;
  int seeds_ok = 0;
  int seeds_failed = 0;
};

struct CoverageReport {
  std::vector<CoverageCell> cells;  // sorted by (scenario, intervention, alpha, seed)
  std::vector<IntervalRecord> intervals;
  std::vector<SeedDiagnostics> diagnostics;

  std::vector<AggregateCell> aggregate() const;
  // Aggregate of one (scenario, intervention, alpha); throws if absent.
  AggregateCell find(Scenario scenario, const std::string& intervention, double alpha) const;
};

CoverageReport run_experiment(const ExperimentConfig& config);

// An interval tagged with the unit it was computed for.
struct UnitInterval {
  std::size_t unit = 0;
  PredictionInterval interval;
};

struct IteInterval {
  double lower = 0.0;
  double upper = 0.0;

  double width() const noexcept { return upper - lower; }
  bool contains(double v) const noexcept { return lower <= v && v <= upper; }
};

// Both intervals at the same level alpha/2 for the same unit, under
// treatment a and control 0; the result covers Y(a) - Y(0) at level alpha.
IteInterval ite_interval(const UnitInterval& treated, const UnitInterval& control);

struct IteConfig {
  int dataset_id = 1;
  double a_treated = 10.0;
  double a_control = 0.0;
  double alpha = 0.2;  // each potential-outcome interval uses alpha / 2
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  GeneratorSpec generator;
  SolverParams solver;
  MlpConfig mlp;
  ConditionalDensityConfig density;
  int workers = 0;
};

struct IteSeedResult {
  std::uint64_t seed = 0;
  double coverage = 0.0;
  double mean_width = 0.0;
  std::string error;
};

// Hard-intervention intervals with an estimated propensity for both arms.
std::vector<IteSeedResult> run_ite_experiment(const IteConfig& config);

// coverage.csv, runtime.csv, intervals.csv and summary.json under `dir`.
void export_plot_data(const CoverageReport& report, const std::string& dir);

void write_report_json(const CoverageReport& report, const std::string& path);
CoverageReport read_report_json(const std::string& path);

void write_intervals_csv(const std::string& path, const std::vector<IntervalRecord>& intervals);
std::vector<IntervalRecord> read_intervals_csv(const std::string& path);

}  // namespace ccp
