#include "ccp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "ccp/shift_known.hpp"
#include "json.hpp"

namespace ccp {

namespace {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t tag_model = 11;
constexpr std::uint64_t tag_units = 12;
constexpr std::uint64_t tag_dropout = 13;
constexpr std::uint64_t tag_ite = 14;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs job(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& job) {
  std::size_t threads = workers > 0 ? static_cast<std::size_t>(workers)
                                    : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::string error_text(const std::exception& e) { return e.what(); }

json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

double json_number(const json& j) {
  if (j.is_string()) return parse_double(j.get<std::string>());
  if (j.is_null()) return std::nan("");
  return j.get<double>();
}

struct SeedOutput {
  std::vector<CoverageCell> cells;
  std::vector<IntervalRecord> intervals;
  SeedDiagnostics diagnostics;
};

struct SeedContext {
  Dataset data;
  Mlp model;
  CalibratedScores calib;
  std::unique_ptr<KernelConditionalDensity> pihat;
  std::unique_ptr<TruePropensity> truth;
};

MlpConfig seeded(MlpConfig mlp, std::uint64_t seed) {
  mlp.seed = derive_seed(seed, {tag_model});
  return mlp;
}

Dataset load_data(const ExperimentConfig& config, std::uint64_t seed) {
  if (!config.csv_path.empty()) return read_dataset_csv(config.csv_path, config.fractions, seed);
  GeneratorSpec spec = config.generator;
  spec.dataset_id = config.dataset_id;
  spec.seed = seed;
  return generate(spec);
}

std::vector<TestUnit> user_test_units(const Dataset& data, const Intervention& iv) {
  std::vector<TestUnit> units;
  for (const Sample& s : data.samples(Split::test)) {
    TestUnit u;
    u.x = s.x;
    u.a = s.a;
    if (const auto* soft = std::get_if<SoftShift>(&iv.kind)) {
      u.a_star = s.a + soft->delta;
    } else {
      u.a_star = std::get<HardAssignment>(iv.kind).a_star(s.x);
    }
    u.y_true = std::nan("");
    u.y = std::nan("");
    units.push_back(std::move(u));
  }
  if (units.empty()) throw Error(ErrorCode::insufficient_data, "test split is empty");
  return units;
}

HardIntervalParams hard_params(const SolverParams& solver) {
  HardIntervalParams p;
  p.error_bound = solver.error_bound;
  p.sigma_bounds = solver.sigma_bounds;
  p.search.epsilon = solver.epsilon;
  p.solver.sigma_grid = solver.sigma_grid;
  return p;
}

using IntervalFn = std::function<PredictionInterval(std::size_t, const TestUnit&, double)>;

// Builds the per-unit interval function for one (scenario, intervention).
IntervalFn make_method(const ExperimentConfig& config, const SeedContext& ctx, Scenario scenario,
                       const Intervention& iv, const std::vector<TestUnit>& units,
                       std::uint64_t seed) {
  SearchOptions search;
  search.epsilon = config.solver.epsilon;
  if (scenario == Scenario::mc_dropout) {
    auto samples = std::make_shared<std::vector<std::vector<double>>>();
    const std::uint64_t label = fnv1a(iv.label());
    for (std::size_t i = 0; i < units.size(); ++i) {
      samples->push_back(mc_dropout_samples(ctx.model, units[i].x, units[i].a_star,
                                            config.mc_samples,
                                            derive_seed(seed, {tag_dropout, label, i})));
    }
    return [samples](std::size_t i, const TestUnit&, double alpha) {
      return mc_dropout_interval_from_samples((*samples)[i], alpha);
    };
  }
  const ConditionalDensity* density = nullptr;
  if (scenario == Scenario::known_propensity) {
    if (!ctx.truth) {
      throw Error(ErrorCode::invalid_input, "known-propensity scenario needs synthetic data");
    }
    density = ctx.truth.get();
  } else {
    density = ctx.pihat.get();
  }
  if (const auto* soft = std::get_if<SoftShift>(&iv.kind)) {
    auto engine = std::make_shared<SoftIntervalEngine>(ctx.model, *density, ctx.calib, soft->delta);
    return [engine, search](std::size_t, const TestUnit& u, double alpha) {
      return engine->interval(u.x, u.a, alpha, search);
    };
  }
  auto engine = std::make_shared<HardIntervalEngine>(ctx.model, *density, ctx.calib,
                                                     hard_params(config.solver));
  const HardAssignment assignment = std::get<HardAssignment>(iv.kind);
  return [engine, assignment](std::size_t, const TestUnit& u, double alpha) {
    return engine->interval(u.x, assignment, alpha);
  };
}

SeedOutput run_seed(const ExperimentConfig& config, std::uint64_t seed, bool keep_intervals) {
  SeedOutput out;
  out.diagnostics.seed = seed;
  const auto fail_all = [&](const std::string& why) {
    for (Scenario sc : config.scenarios) {
      for (const Intervention& iv : config.interventions) {
        for (double alpha : config.alphas) {
          CoverageCell c;
          c.scenario = sc;
          c.intervention = iv.label();
          c.alpha = alpha;
          c.seed = seed;
          c.coverage = std::nan("");
          c.width = std::nan("");
          c.error = why;
          out.cells.push_back(c);
        }
      }
    }
  };

  SeedContext ctx;
  try {
    ctx.data = load_data(config, seed);
    ctx.model = train_mlp(seeded(config.mlp, seed), ctx.data.samples(Split::train),
                          ctx.data.samples(Split::validation));
    ctx.calib = calibrate(ctx.model, ctx.data.samples(Split::calibration));
    const auto test = ctx.data.samples(Split::test);
    out.diagnostics.test_mse = test.empty() ? std::nan("") : mean_squared_error(ctx.model, test);
    out.diagnostics.final_train_loss = ctx.model.train_loss.back();
    out.diagnostics.final_validation_loss = ctx.model.validation_loss.back();
    if (std::find(config.scenarios.begin(), config.scenarios.end(),
                  Scenario::unknown_propensity) != config.scenarios.end()) {
      ctx.pihat = std::make_unique<KernelConditionalDensity>(
          fit_conditional_density(config.density, ctx.data.samples(Split::train)));
    }
    if (config.csv_path.empty()) ctx.truth = std::make_unique<TruePropensity>(config.dataset_id);
  } catch (const std::exception& e) {
    out.diagnostics.error = error_text(e);
    fail_all(out.diagnostics.error);
    return out;
  }

  for (const Intervention& iv : config.interventions) {
    std::vector<TestUnit> units;
    std::string unit_error;
    try {
      units = config.csv_path.empty()
                  ? draw_test_units(config.dataset_id, iv, config.generator.n_test_per_intervention,
                                    derive_seed(seed, {tag_units,
                                                       static_cast<std::uint64_t>(config.dataset_id),
                                                       fnv1a(iv.label())}))
                  : user_test_units(ctx.data, iv);
    } catch (const std::exception& e) {
      unit_error = error_text(e);
    }
    for (Scenario sc : config.scenarios) {
      IntervalFn method;
      double setup_time = 0.0;
      std::string setup_error = unit_error;
      if (setup_error.empty()) {
        const auto start = Clock::now();
        try {
          method = make_method(config, ctx, sc, iv, units, seed);
        } catch (const std::exception& e) {
          setup_error = error_text(e);
        }
        setup_time = seconds_since(start) / static_cast<double>(config.alphas.size());
      }
      for (double alpha : config.alphas) {
        CoverageCell c;
        c.scenario = sc;
        c.intervention = iv.label();
        c.alpha = alpha;
        c.seed = seed;
        c.n_test = static_cast<int>(units.size());
        if (!setup_error.empty()) {
          c.coverage = std::nan("");
          c.width = std::nan("");
          c.error = setup_error;
          out.cells.push_back(c);
          continue;
        }
        const auto start = Clock::now();
        try {
          std::vector<PredictionInterval> intervals;
          intervals.reserve(units.size());
          for (std::size_t i = 0; i < units.size(); ++i) intervals.push_back(method(i, units[i], alpha));
          c.runtime = seconds_since(start) + setup_time;
          double width = 0.0;
          std::size_t covered = 0;
          bool truth_known = true;
          for (std::size_t i = 0; i < units.size(); ++i) {
            width += intervals[i].width();
            truth_known = truth_known && std::isfinite(units[i].y);
            covered += intervals[i].contains(units[i].y) ? 1 : 0;
          }
          c.width = width / static_cast<double>(units.size());
          c.coverage = static_cast<double>(covered) / static_cast<double>(units.size());
          if (!truth_known) {
            c.coverage = std::nan("");
            c.error = "potential outcomes unavailable for coverage";
          }
          if (keep_intervals) {
            const std::string name = std::string(to_string(sc)) + "/" + iv.label();
            for (std::size_t i = 0; i < units.size(); ++i) {
              out.intervals.push_back({units[i].x, units[i].a_star, intervals[i].center,
                                       intervals[i].lower, intervals[i].upper, units[i].y, alpha,
                                       name});
            }
          }
        } catch (const std::exception& e) {
          c.runtime = seconds_since(start) + setup_time;
          c.coverage = std::nan("");
          c.width = std::nan("");
          c.error = error_text(e);
        }
        out.cells.push_back(c);
      }
    }
  }
  return out;
}

bool cell_less(const CoverageCell& l, const CoverageCell& r) {
  return std::tie(l.scenario, l.intervention, l.alpha, l.seed) <
         std::tie(r.scenario, r.intervention, r.alpha, r.seed);
}

}  // namespace

const char* to_string(Scenario scenario) noexcept {
  switch (scenario) {
    case Scenario::known_propensity:
      return "known-propensity";
    case Scenario::unknown_propensity:
      return "unknown-propensity";
    case Scenario::mc_dropout:
      return "mc-dropout-baseline";
  }
  return "unknown";
}

Scenario parse_scenario(const std::string& text) {
  if (text == "known-propensity" || text == "known") return Scenario::known_propensity;
  if (text == "unknown-propensity" || text == "unknown") return Scenario::unknown_propensity;
  if (text == "mc-dropout-baseline" || text == "mc-dropout") return Scenario::mc_dropout;
  throw Error(ErrorCode::invalid_input, "unknown scenario '" + text + "'");
}

void ExperimentConfig::validate() const {
  if (csv_path.empty()) generator.validate();
  if (csv_path.empty() && dataset_id != 1 && dataset_id != 2) {
    throw Error(ErrorCode::invalid_input, "dataset id must be 1 or 2");
  }
  if (scenarios.empty()) throw Error(ErrorCode::invalid_input, "no scenario selected");
  if (interventions.empty()) throw Error(ErrorCode::invalid_input, "no intervention selected");
  if (seeds.empty()) throw Error(ErrorCode::invalid_input, "no seed selected");
  if (alphas.empty()) throw Error(ErrorCode::invalid_input, "no alpha selected");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw Error(ErrorCode::invalid_input, "alphas must lie in (0, 1)");
  }
  if (!(solver.error_bound >= 1.0)) throw Error(ErrorCode::invalid_input, "M must be >= 1");
  if (!(solver.epsilon > 0.0)) throw Error(ErrorCode::invalid_input, "epsilon must be positive");
  if (solver.sigma_grid < 1) throw Error(ErrorCode::invalid_input, "sigma grid must be positive");
  if (mc_samples < 2) throw Error(ErrorCode::invalid_input, "MC dropout needs >= 2 samples");
  mlp.validate();
  density.validate();
  fractions.validate();
}

ExperimentConfig config_from_json_text(const std::string& text, ExperimentConfig base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_input, std::string("config is not valid JSON: ") + e.what());
  }
  try {
    ExperimentConfig& c = base;
    if (j.contains("dataset")) {
      if (j["dataset"].is_string()) {
        c.csv_path = j["dataset"].get<std::string>();
      } else {
        c.dataset_id = j["dataset"].get<int>();
      }
    }
    if (j.contains("csv_path")) c.csv_path = j["csv_path"].get<std::string>();
    if (j.contains("scenario")) c.scenarios = {parse_scenario(j["scenario"].get<std::string>())};
    if (j.contains("scenarios")) {
      c.scenarios.clear();
      for (const auto& s : j["scenarios"]) c.scenarios.push_back(parse_scenario(s.get<std::string>()));
    }
    if (j.contains("interventions")) {
      c.interventions.clear();
      for (const auto& s : j["interventions"]) c.interventions.push_back(parse_intervention(s.get<std::string>()));
    }
    if (j.contains("alphas")) c.alphas = j["alphas"].get<std::vector<double>>();
    if (j.contains("alpha")) c.alphas = {j["alpha"].get<double>()};
    if (j.contains("seeds")) {
      if (j["seeds"].is_number()) {
        c.seeds.resize(j["seeds"].get<std::size_t>());
        std::iota(c.seeds.begin(), c.seeds.end(), std::uint64_t{0});
      } else {
        c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
      }
    }
    if (j.contains("seed")) c.seeds = {j["seed"].get<std::uint64_t>()};
    if (j.contains("error_bound")) c.solver.error_bound = j["error_bound"].get<double>();
    if (j.contains("sigma_min")) c.solver.sigma_bounds.min = j["sigma_min"].get<double>();
    if (j.contains("sigma_max")) c.solver.sigma_bounds.max = j["sigma_max"].get<double>();
    if (j.contains("epsilon")) c.solver.epsilon = j["epsilon"].get<double>();
    if (j.contains("sigma_grid")) c.solver.sigma_grid = j["sigma_grid"].get<int>();
    if (j.contains("mc_samples")) c.mc_samples = j["mc_samples"].get<int>();
    if (j.contains("n_train")) c.generator.n_train = j["n_train"].get<int>();
    if (j.contains("n_validation")) c.generator.n_validation = j["n_validation"].get<int>();
    if (j.contains("n_calibration")) c.generator.n_calibration = j["n_calibration"].get<int>();
    if (j.contains("n_test")) c.generator.n_test_per_intervention = j["n_test"].get<int>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("keep_intervals")) c.keep_intervals = j["keep_intervals"].get<bool>();
    if (j.contains("workers")) c.workers = j["workers"].get<int>();
    if (j.contains("mlp")) {
      const auto& m = j["mlp"];
      if (m.contains("layer_widths")) c.mlp.layer_widths = m["layer_widths"].get<std::vector<int>>();
      if (m.contains("dropout_rate")) c.mlp.dropout_rate = m["dropout_rate"].get<double>();
      if (m.contains("epochs")) c.mlp.epochs = m["epochs"].get<int>();
      if (m.contains("batch_size")) c.mlp.batch_size = m["batch_size"].get<int>();
      if (m.contains("learning_rate")) c.mlp.learning_rate = m["learning_rate"].get<double>();
    }
    if (j.contains("density")) {
      const auto& d = j["density"];
      if (d.contains("bandwidth")) c.density.bandwidth = d["bandwidth"].get<double>();
      if (d.contains("grouping")) {
        const auto g = d["grouping"].get<std::string>();
        if (g == "discrete-exact") {
          c.density.grouping = CovariateGrouping::discrete_exact;
        } else if (g == "kernel-weighted") {
          c.density.grouping = CovariateGrouping::kernel_weighted;
        } else {
          throw Error(ErrorCode::invalid_input, "unknown covariate grouping '" + g + "'");
        }
      }
      if (d.contains("covariate_bandwidth")) {
        c.density.covariate_bandwidth = d["covariate_bandwidth"].get<double>();
      }
    }
    if (j.contains("split_fractions")) {
      const auto f = j["split_fractions"].get<std::vector<double>>();
      if (f.size() != 4) throw Error(ErrorCode::invalid_input, "split_fractions needs 4 entries");
      c.fractions = {f[0], f[1], f[2], f[3]};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_input, std::string("bad config value: ") + e.what());
  }
  return base;
}

ExperimentConfig load_experiment_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str(), std::move(base));
}

std::vector<AggregateCell> CoverageReport::aggregate() const {
  std::vector<AggregateCell> out;
  std::vector<CoverageCell> sorted = cells;
  std::sort(sorted.begin(), sorted.end(), cell_less);
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    AggregateCell a;
    a.scenario = sorted[i].scenario;
    a.intervention = sorted[i].intervention;
    a.alpha = sorted[i].alpha;
    std::vector<double> cov;
    double width = 0.0;
    double runtime = 0.0;
    for (; j < sorted.size() && sorted[j].scenario == a.scenario &&
           sorted[j].intervention == a.intervention && sorted[j].alpha == a.alpha;
         ++j) {
      if (!sorted[j].ok()) {
        ++a.seeds_failed;
        continue;
      }
      ++a.seeds_ok;
      cov.push_back(sorted[j].coverage);
      width += sorted[j].width;
      runtime += sorted[j].runtime;
    }
    if (!cov.empty()) {
      const double n = static_cast<double>(cov.size());
      a.mean_coverage = std::accumulate(cov.begin(), cov.end(), 0.0) / n;
      double ss = 0.0;
      for (double v : cov) ss += (v - a.mean_coverage) * (v - a.mean_coverage);
      a.sd_coverage = cov.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      a.mean_width = width / n;
      a.mean_runtime = runtime / n;
    } else {
      a.mean_coverage = a.sd_coverage = a.mean_width = a.mean_runtime = std::nan("");
    }
    out.push_back(a);
    i = j;
  }
  return out;
}

AggregateCell CoverageReport::find(Scenario scenario, const std::string& intervention,
                                   double alpha) const {
  for (const AggregateCell& a : aggregate()) {
    if (a.scenario == scenario && a.intervention == intervention && a.alpha == alpha) return a;
  }
  throw Error(ErrorCode::invalid_input, std::string("no report cell for ") + to_string(scenario) +
                                            " " + intervention);
}

CoverageReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::vector<SeedOutput> outputs(config.seeds.size());
  std::mutex log_mutex;
  parallel_for(config.seeds.size(), config.workers, [&](std::size_t k) {
    outputs[k] = run_seed(config, config.seeds[k], config.keep_intervals && k == 0);
    if (config.verbose) {
      std::lock_guard<std::mutex> lock(log_mutex);
      std::cerr << "seed " << config.seeds[k] << " done\n";
    }
  });
  CoverageReport report;
  for (auto& o : outputs) {
    report.cells.insert(report.cells.end(), o.cells.begin(), o.cells.end());
    report.intervals.insert(report.intervals.end(), o.intervals.begin(), o.intervals.end());
    report.diagnostics.push_back(o.diagnostics);
  }
  std::stable_sort(report.cells.begin(), report.cells.end(), cell_less);
  return report;
}

IteInterval ite_interval(const UnitInterval& treated, const UnitInterval& control) {
  if (treated.unit != control.unit) {
    throw Error(ErrorCode::invalid_input, "ITE intervals belong to different units (" +
                                              std::to_string(treated.unit) + " vs " +
                                              std::to_string(control.unit) + ")");
  }
  if (treated.interval.alpha != control.interval.alpha) {
    throw Error(ErrorCode::invalid_input, "ITE intervals use different significance levels");
  }
  const PredictionInterval& t = treated.interval;
  const PredictionInterval& c = control.interval;
  return {t.center - t.s_star - c.center - c.s_star, t.center + t.s_star - c.center + c.s_star};
}

std::vector<IteSeedResult> run_ite_experiment(const IteConfig& config) {
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
    throw Error(ErrorCode::invalid_input, "alpha must lie in (0, 1)");
  }
  std::vector<IteSeedResult> results(config.seeds.size());
  parallel_for(config.seeds.size(), config.workers, [&](std::size_t k) {
    const std::uint64_t seed = config.seeds[k];
    IteSeedResult& r = results[k];
    r.seed = seed;
    try {
      GeneratorSpec spec = config.generator;
      spec.dataset_id = config.dataset_id;
      spec.seed = seed;
      const Dataset data = generate(spec);
      const Mlp model = train_mlp(seeded(config.mlp, seed), data.samples(Split::train),
                                  data.samples(Split::validation));
      const CalibratedScores calib = calibrate(model, data.samples(Split::calibration));
      const KernelConditionalDensity pihat =
          fit_conditional_density(config.density, data.samples(Split::train));
      HardIntervalParams params = hard_params(config.solver);
      HardIntervalEngine engine(model, pihat, calib, params);

      std::mt19937_64 rng(derive_seed(seed, {tag_ite, static_cast<std::uint64_t>(config.dataset_id)}));
      std::normal_distribution<double> noise(0.0, outcome_noise_sd);
      const double half = config.alpha / 2.0;
      std::size_t covered = 0;
      double width = 0.0;
      const int n = spec.n_test_per_intervention;
      for (int i = 0; i < n; ++i) {
        const LabeledSample s = draw_sample(config.dataset_id, rng);
        const auto& x = s.sample.x;
        const double y_t = true_outcome(config.dataset_id, config.a_treated, x[0]) + noise(rng);
        const double y_c = true_outcome(config.dataset_id, config.a_control, x[0]) + noise(rng);
        const auto unit = static_cast<std::size_t>(i);
        const IteInterval ite = ite_interval({unit, engine.interval(x, config.a_treated, half)},
                                             {unit, engine.interval(x, config.a_control, half)});
        covered += ite.contains(y_t - y_c) ? 1 : 0;
        width += ite.width();
      }
      r.coverage = static_cast<double>(covered) / n;
      r.mean_width = width / n;
    } catch (const std::exception& e) {
      r.coverage = std::nan("");
      r.mean_width = std::nan("");
      r.error = error_text(e);
    }
  });
  return results;
}

void write_intervals_csv(const std::string& path, const std::vector<IntervalRecord>& intervals) {
  CsvTable t;
  const std::size_t d = intervals.empty() ? 1 : intervals.front().x.size();
  if (d == 1) {
    t.header.emplace_back("x");
  } else {
    for (std::size_t j = 0; j < d; ++j) t.header.push_back("x_" + std::to_string(j));
  }
  for (const char* h : {"a", "center", "lower", "upper", "y_true", "alpha", "method"}) {
    t.header.emplace_back(h);
  }
  for (const IntervalRecord& r : intervals) {
    if (r.x.size() != d) throw Error(ErrorCode::invalid_input, "mixed covariate dimensions");
    std::vector<std::string> row;
    for (double v : r.x) row.push_back(format_double(v));
    for (double v : {r.a, r.center, r.lower, r.upper, r.y_true, r.alpha}) {
      row.push_back(format_double(v));
    }
    row.push_back(r.method);
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

std::vector<IntervalRecord> read_intervals_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  std::vector<int> xcols;
  if (t.column("x") >= 0) {
    xcols.push_back(t.column("x"));
  } else {
    for (std::size_t j = 0; t.column("x_" + std::to_string(j)) >= 0; ++j) {
      xcols.push_back(t.column("x_" + std::to_string(j)));
    }
  }
  const char* names[] = {"a", "center", "lower", "upper", "y_true", "alpha", "method"};
  std::vector<int> cols;
  for (const char* n : names) {
    cols.push_back(t.column(n));
    if (cols.back() < 0) throw Error(ErrorCode::io, path + ": missing column " + n);
  }
  std::vector<IntervalRecord> out;
  for (const auto& row : t.rows) {
    IntervalRecord r;
    for (int c : xcols) r.x.push_back(parse_double(row[static_cast<std::size_t>(c)]));
    const auto num = [&](int k) { return parse_double(row[static_cast<std::size_t>(cols[static_cast<std::size_t>(k)])]); };
    r.a = num(0);
    r.center = num(1);
    r.lower = num(2);
    r.upper = num(3);
    r.y_true = num(4);
    r.alpha = num(5);
    r.method = row[static_cast<std::size_t>(cols[6])];
    out.push_back(std::move(r));
  }
  return out;
}

void export_plot_data(const CoverageReport& report, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create output directory " + dir + ": " + ec.message());
  const std::filesystem::path base(dir);

  std::vector<CoverageCell> cells = report.cells;
  std::stable_sort(cells.begin(), cells.end(), cell_less);
  CsvTable cov;
  cov.header = {"scenario", "intervention", "alpha", "seed", "coverage", "width", "n_test", "error"};
  CsvTable rt;
  rt.header = {"scenario", "intervention", "alpha", "seed", "runtime"};
  for (const CoverageCell& c : cells) {
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    cov.rows.push_back({to_string(c.scenario), c.intervention, format_double(c.alpha),
                        std::to_string(c.seed), format_double(c.coverage), format_double(c.width),
                        std::to_string(c.n_test), err});
    rt.rows.push_back({to_string(c.scenario), c.intervention, format_double(c.alpha),
                       std::to_string(c.seed), format_double(c.runtime)});
  }
  write_csv((base / "coverage.csv").string(), cov);
  write_csv((base / "runtime.csv").string(), rt);
  write_intervals_csv((base / "intervals.csv").string(), report.intervals);

  json summary;
  summary["cells"] = json::array();
  for (const AggregateCell& a : report.aggregate()) {
    summary["cells"].push_back({{"scenario", to_string(a.scenario)},
                                {"intervention", a.intervention},
                                {"alpha", a.alpha},
                                {"mean_coverage", number_or_string(a.mean_coverage)},
                                {"sd_coverage", number_or_string(a.sd_coverage)},
                                {"mean_width", number_or_string(a.mean_width)},
                                {"mean_runtime", number_or_string(a.mean_runtime)},
                                {"seeds_ok", a.seeds_ok},
                                {"seeds_failed", a.seeds_failed}});
  }
  summary["models"] = json::array();
  for (const SeedDiagnostics& d : report.diagnostics) {
    summary["models"].push_back({{"seed", d.seed},
                                 {"test_mse", number_or_string(d.test_mse)},
                                 {"final_train_loss", number_or_string(d.final_train_loss)},
                                 {"final_validation_loss", number_or_string(d.final_validation_loss)},
                                 {"error", d.error}});
  }
  std::ofstream out(base / "summary.json");
  if (!out) throw Error(ErrorCode::io, "cannot write summary.json in " + dir);
  out << summary.dump(2) << '\n';
}

void write_report_json(const CoverageReport& report, const std::string& path) {
  json j;
  j["cells"] = json::array();
  for (const CoverageCell& c : report.cells) {
    j["cells"].push_back({{"scenario", to_string(c.scenario)},
                          {"intervention", c.intervention},
                          {"alpha", c.alpha},
                          {"seed", c.seed},
                          {"coverage", number_or_string(c.coverage)},
                          {"width", number_or_string(c.width)},
                          {"runtime", c.runtime},
                          {"n_test", c.n_test},
                          {"error", c.error}});
  }
  j["diagnostics"] = json::array();
  for (const SeedDiagnostics& d : report.diagnostics) {
    j["diagnostics"].push_back({{"seed", d.seed},
                                {"test_mse", number_or_string(d.test_mse)},
                                {"final_train_loss", number_or_string(d.final_train_loss)},
                                {"final_validation_loss", number_or_string(d.final_validation_loss)},
                                {"error", d.error}});
  }
  j["intervals"] = json::array();
  for (const IntervalRecord& r : report.intervals) {
    j["intervals"].push_back({{"x", r.x},
                              {"a", r.a},
                              {"center", r.center},
                              {"lower", number_or_string(r.lower)},
                              {"upper", number_or_string(r.upper)},
                              {"y_true", number_or_string(r.y_true)},
                              {"alpha", r.alpha},
                              {"method", r.method}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path + " for writing");
  out << j.dump() << '\n';
}

CoverageReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  CoverageReport report;
  try {
    const json j = json::parse(in);
    for (const auto& c : j.at("cells")) {
      CoverageCell cell;
      cell.scenario = parse_scenario(c.at("scenario").get<std::string>());
      cell.intervention = c.at("intervention").get<std::string>();
      cell.alpha = c.at("alpha").get<double>();
      cell.seed = c.at("seed").get<std::uint64_t>();
      cell.coverage = json_number(c.at("coverage"));
      cell.width = json_number(c.at("width"));
      cell.runtime = c.at("runtime").get<double>();
      cell.n_test = c.at("n_test").get<int>();
      cell.error = c.at("error").get<std::string>();
      report.cells.push_back(std::move(cell));
    }
    for (const auto& d : j.at("diagnostics")) {
      SeedDiagnostics s;
      s.seed = d.at("seed").get<std::uint64_t>();
      s.test_mse = json_number(d.at("test_mse"));
      s.final_train_loss = json_number(d.at("final_train_loss"));
      s.final_validation_loss = json_number(d.at("final_validation_loss"));
      s.error = d.at("error").get<std::string>();
      report.diagnostics.push_back(std::move(s));
    }
    for (const auto& r : j.at("intervals")) {
      IntervalRecord rec;
      rec.x = r.at("x").get<std::vector<double>>();
      rec.a = r.at("a").get<double>();
      rec.center = r.at("center").get<double>();
      rec.lower = json_number(r.at("lower"));
      rec.upper = json_number(r.at("upper"));
      rec.y_true = json_number(r.at("y_true"));
      rec.alpha = r.at("alpha").get<double>();
      rec.method = r.at("method").get<std::string>();
      report.intervals.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, path + ": malformed report: " + e.what());
  }
  return report;
}

}  // namespace ccp
