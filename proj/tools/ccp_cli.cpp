#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ccp/core.hpp"
#include "ccp/harness.hpp"
#include "ccp/io.hpp"
#include "ccp/models.hpp"
#include "ccp/shift_known.hpp"
#include "ccp/shift_unknown.hpp"
#include "ccp/synthdata.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct GlobalOptions {
  std::string config;
  std::vector<double> alphas;
  std::optional<double> error_bound;
  std::optional<double> sigma_min;
  std::optional<double> sigma_max;
  std::optional<double> epsilon;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> scenarios;
  std::vector<std::string> interventions;
  std::string out;
  std::optional<int> dataset;
  std::string data;
  std::vector<double> split;
  int workers = -1;
  bool verbose = false;
};

ccp::ExperimentConfig build_config(const GlobalOptions& g) {
  ccp::ExperimentConfig c;
  if (!g.config.empty()) c = ccp::load_experiment_config(g.config, c);
  if (g.dataset) c.dataset_id = *g.dataset;
  if (!g.data.empty()) c.csv_path = g.data;
  if (!g.alphas.empty()) c.alphas = g.alphas;
  if (g.error_bound) c.solver.error_bound = *g.error_bound;
  if (g.sigma_min) c.solver.sigma_bounds.min = *g.sigma_min;
  if (g.sigma_max) c.solver.sigma_bounds.max = *g.sigma_max;
  if (g.epsilon) c.solver.epsilon = *g.epsilon;
  if (g.seed) c.seeds = {*g.seed};
  if (!g.scenarios.empty()) {
    c.scenarios.clear();
    for (const auto& s : g.scenarios) c.scenarios.push_back(ccp::parse_scenario(s));
  }
  if (!g.interventions.empty()) {
    c.interventions.clear();
    for (const auto& s : g.interventions) c.interventions.push_back(ccp::parse_intervention(s));
  }
  if (!g.out.empty()) c.output_dir = g.out;
  if (g.split.size() == 4) c.fractions = {g.split[0], g.split[1], g.split[2], g.split[3]};
  if (g.workers >= 0) c.workers = g.workers;
  c.verbose = g.verbose;
  return c;
}

ccp::Dataset load_dataset(const ccp::ExperimentConfig& c) {
  if (c.csv_path.empty()) throw ccp::Error(ccp::ErrorCode::invalid_input, "--data is required");
  return ccp::read_dataset_csv(c.csv_path, c.fractions, c.seeds.front());
}

std::string require_out(const ccp::ExperimentConfig& c, const char* what) {
  if (c.output_dir.empty()) {
    throw ccp::Error(ccp::ErrorCode::invalid_input, std::string("--out is required for ") + what);
  }
  return c.output_dir;
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

json interval_json(const ccp::PredictionInterval& iv) {
  json j;
  j["center"] = iv.center;
  j["s_star"] = iv.s_star;
  j["lower"] = iv.lower;
  j["upper"] = iv.upper;
  j["alpha"] = iv.alpha;
  j["width"] = iv.width();
  return j;
}

void cmd_generate(const ccp::ExperimentConfig& c, int n_train, int n_cal) {
  ccp::GeneratorSpec spec = c.generator;
  spec.dataset_id = c.dataset_id;
  spec.seed = c.seeds.front();
  if (n_train > 0) spec.n_train = n_train;
  if (n_cal > 0) spec.n_calibration = n_cal;
  const std::string out = require_out(c, "generate-data");
  ensure_parent(out);
  ccp::write_dataset_csv(out, ccp::generate(spec));
  const std::string manifest = fs::path(out).replace_extension(".json").string();
  ccp::write_manifest(manifest, spec, fs::path(out).filename().string());
  std::cout << "wrote " << out << " and " << manifest << '\n';
}

void cmd_train(const ccp::ExperimentConfig& c, std::optional<int> epochs) {
  const ccp::Dataset data = load_dataset(c);
  ccp::MlpConfig cfg = c.mlp;
  cfg.seed = c.seeds.front();
  if (epochs) cfg.epochs = *epochs;
  const auto train = data.samples(ccp::Split::train);
  const auto validation = data.samples(ccp::Split::validation);
  const ccp::Mlp model = ccp::train_mlp(cfg, train, validation);
  const std::string out = require_out(c, "train");
  ensure_parent(out);
  model.save(out);
  json j;
  j["model"] = out;
  j["final_train_loss"] = model.train_loss.back();
  j["final_validation_loss"] = model.validation_loss.back();
  const auto test = data.samples(ccp::Split::test);
  if (!test.empty()) j["test_mse"] = ccp::mean_squared_error(model, test);
  std::cout << j.dump(2) << '\n';
}

void cmd_fit_propensity(const ccp::ExperimentConfig& c) {
  const ccp::Dataset data = load_dataset(c);
  const auto model = ccp::fit_conditional_density(c.density, data.samples(ccp::Split::train));
  const std::string out = require_out(c, "fit-propensity");
  ensure_parent(out);
  model.save(out);
  std::cout << "wrote " << out << " (" << model.groups().size() << " groups)\n";
}

void cmd_calibrate(const ccp::ExperimentConfig& c, const std::string& model_path) {
  const ccp::Dataset data = load_dataset(c);
  const ccp::Mlp model = ccp::Mlp::load(model_path);
  const ccp::CalibratedScores calib = ccp::calibrate(model, data.samples(ccp::Split::calibration));
  ccp::CsvTable t;
  for (std::size_t d = 0; d < data.dim(); ++d) t.header.push_back("x_" + std::to_string(d));
  for (const char* h : {"a", "y", "prediction", "score"}) t.header.emplace_back(h);
  for (std::size_t i = 0; i < calib.size(); ++i) {
    const ccp::Sample& s = calib.samples[i];
    std::vector<std::string> row;
    for (double v : s.x) row.push_back(ccp::format_double(v));
    row.push_back(ccp::format_double(s.a));
    row.push_back(ccp::format_double(s.y));
    row.push_back(ccp::format_double(model.predict(s.x, s.a)));
    row.push_back(ccp::format_double(calib.scores[i]));
    t.rows.push_back(std::move(row));
  }
  const std::string out = require_out(c, "calibrate");
  ensure_parent(out);
  ccp::write_csv(out, t);
  std::cout << "wrote " << calib.size() << " calibration scores to " << out << '\n';
}

void cmd_interval(const ccp::ExperimentConfig& c, const std::string& model_path,
                  const std::string& propensity_path, const std::vector<double>& x, double a) {
  if (c.interventions.size() != 1) {
    throw ccp::Error(ccp::ErrorCode::invalid_input, "interval needs exactly one --intervention");
  }
  const ccp::Dataset data = load_dataset(c);
  if (x.size() != data.dim()) {
    throw ccp::Error(ccp::ErrorCode::invalid_input,
                     "--x needs " + std::to_string(data.dim()) + " values");
  }
  const ccp::Mlp model = ccp::Mlp::load(model_path);
  const ccp::CalibratedScores calib = ccp::calibrate(model, data.samples(ccp::Split::calibration));

  std::unique_ptr<ccp::ConditionalDensity> propensity;
  if (!propensity_path.empty()) {
    propensity = std::make_unique<ccp::KernelConditionalDensity>(
        ccp::KernelConditionalDensity::load(propensity_path));
  } else {
    propensity = std::make_unique<ccp::TruePropensity>(c.dataset_id);
  }

  const ccp::Intervention& iv = c.interventions.front();
  ccp::SearchOptions search;
  search.epsilon = c.solver.epsilon;
  json out = json::array();
  if (iv.is_soft()) {
    const double delta = std::get<ccp::SoftShift>(iv.kind).delta;
    const ccp::SoftIntervalEngine engine(model, *propensity, calib, delta);
    for (double alpha : c.alphas) out.push_back(interval_json(engine.interval(x, a, alpha, search)));
  } else {
    ccp::HardIntervalParams params;
    params.error_bound = c.solver.error_bound;
    params.sigma_bounds = c.solver.sigma_bounds;
    params.search = search;
    params.solver.sigma_grid = c.solver.sigma_grid;
    ccp::HardIntervalEngine engine(model, *propensity, calib, params);
    const auto& assignment = std::get<ccp::HardAssignment>(iv.kind);
    for (double alpha : c.alphas) out.push_back(interval_json(engine.interval(x, assignment, alpha)));
  }
  std::cout << out.dump(2) << '\n';
}

void print_aggregates(const ccp::CoverageReport& report) {
  std::cout << "scenario,intervention,alpha,mean_coverage,sd_coverage,mean_width,seeds_ok,seeds_failed\n";
  for (const auto& a : report.aggregate()) {
    std::cout << ccp::to_string(a.scenario) << ',' << a.intervention << ',' << a.alpha << ','
              << a.mean_coverage << ',' << a.sd_coverage << ',' << a.mean_width << ','
              << a.seeds_ok << ',' << a.seeds_failed << '\n';
  }
}

void cmd_evaluate(ccp::ExperimentConfig c, std::optional<int> n_seeds) {
  if (n_seeds) {
    c.seeds.resize(static_cast<std::size_t>(*n_seeds));
    for (int i = 0; i < *n_seeds; ++i) c.seeds[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
  }
  const std::string out = require_out(c, "evaluate");
  const ccp::CoverageReport report = ccp::run_experiment(c);
  fs::create_directories(out);
  ccp::export_plot_data(report, out);
  ccp::write_report_json(report, (fs::path(out) / "report.json").string());
  print_aggregates(report);
}

void cmd_export(const ccp::ExperimentConfig& c, const std::string& report_path) {
  const ccp::CoverageReport report = ccp::read_report_json(report_path);
  const std::string out = require_out(c, "export");
  fs::create_directories(out);
  ccp::export_plot_data(report, out);
  print_aggregates(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal prediction intervals for continuous treatments"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "JSON config; flags given here override it");
  app.add_option("--alpha", g.alphas, "significance level(s)");
  app.add_option("--error-bound", g.error_bound, "propensity error bound M");
  app.add_option("--sigma-min", g.sigma_min, "smallest tilt width");
  app.add_option("--sigma-max", g.sigma_max, "largest tilt width");
  app.add_option("--epsilon", g.epsilon, "bisection tolerance");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--scenario", g.scenarios, "known-propensity | unknown-propensity | mc-dropout-baseline");
  app.add_option("--intervention", g.interventions, "soft:<delta> or hard:<expr>, repeatable");
  app.add_option("--out", g.out, "output file or directory");
  app.add_option("--dataset", g.dataset, "synthetic dataset id (1 or 2)");
  app.add_option("--data", g.data, "dataset CSV");
  app.add_option("--split", g.split, "train,validation,calibration,test fractions")->expected(4)->delimiter(',');
  app.add_option("--workers", g.workers, "worker threads (0: all cores)");
  app.add_flag("-v,--verbose", g.verbose);

  int n_train = 0;
  int n_cal = 0;
  auto* generate = app.add_subcommand("generate-data", "write a synthetic dataset CSV");
  generate->add_option("--n-train", n_train);
  generate->add_option("--n-calibration", n_cal);

  std::optional<int> epochs;
  auto* train = app.add_subcommand("train", "train the outcome network");
  train->add_option("--epochs", epochs);

  auto* fit = app.add_subcommand("fit-propensity", "fit the kernel propensity estimate");

  std::string model_path;
  auto* calibrate = app.add_subcommand("calibrate", "write calibration scores");
  calibrate->add_option("--model", model_path)->required();

  std::string propensity_path;
  std::vector<double> x;
  double a = 0.0;
  auto* interval = app.add_subcommand("interval", "interval for one test point");
  interval->add_option("--model", model_path)->required();
  interval->add_option("--propensity", propensity_path, "fitted propensity; true policy when omitted");
  interval->add_option("--x", x, "covariates")->required();
  interval->add_option("--a", a, "observed treatment before the soft shift");

  std::optional<int> n_seeds;
  auto* evaluate = app.add_subcommand("evaluate", "run the coverage experiment grid");
  evaluate->add_option("--seeds", n_seeds, "use seeds 0..n-1");

  std::string report_path;
  auto* exporter = app.add_subcommand("export", "rewrite plot data from a saved report");
  exporter->add_option("--report", report_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const ccp::ExperimentConfig config = build_config(g);
    if (*generate) {
      cmd_generate(config, n_train, n_cal);
    } else if (*train) {
      cmd_train(config, epochs);
    } else if (*fit) {
      cmd_fit_propensity(config);
    } else if (*calibrate) {
      cmd_calibrate(config, model_path);
    } else if (*interval) {
      cmd_interval(config, model_path, propensity_path, x, a);
    } else if (*evaluate) {
      cmd_evaluate(config, n_seeds);
    } else if (*exporter) {
      cmd_export(config, report_path);
    }
  } catch (const ccp::Error& e) {
    std::cerr << "error (" << ccp::to_string(e.code()) << "): " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
