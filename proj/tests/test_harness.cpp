#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "test_util.hpp"
#include "ccp/harness.hpp"

using namespace ccp;

namespace {

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ccp_test_harness" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::size_t line_count(const std::string& path) {
  const std::string text = slurp(path);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.dataset_id = 1;
  c.generator.n_train = 600;
  c.generator.n_validation = 100;
  c.generator.n_calibration = 200;
  c.generator.n_test_per_intervention = 100;
  c.mlp.epochs = 30;
  c.seeds = {0, 1};
  c.alphas = {0.1, 0.2};
  c.scenarios = {Scenario::known_propensity, Scenario::unknown_propensity, Scenario::mc_dropout};
  c.interventions = {parse_intervention("soft:5"), parse_intervention("hard:7x")};
  c.keep_intervals = true;
  return c;
}

}  // namespace

TEST_CASE("ite interval") {
  const auto ite = ite_interval({3, build_interval(5.0, 1.0, 0.1)}, {3, build_interval(1.0, 2.0, 0.1)});
  CHECK(ite.lower == 1.0);
  CHECK(ite.upper == 7.0);
  CHECK(ite.width() == 6.0);
  CHECK(ite.width() == build_interval(5.0, 1.0, 0.1).width() + build_interval(1.0, 2.0, 0.1).width());
  const auto point = ite_interval({0, build_interval(2.5, 0.0, 0.1)}, {0, build_interval(1.0, 0.0, 0.1)});
  CHECK(point.lower == 1.5);
  CHECK(point.upper == 1.5);
  CHECK_ERROR_CODE(ite_interval({1, build_interval(0, 1, 0.1)}, {2, build_interval(0, 1, 0.1)}),
                   ErrorCode::invalid_input);
  CHECK_ERROR_CODE(ite_interval({1, build_interval(0, 1, 0.1)}, {1, build_interval(0, 1, 0.2)}),
                   ErrorCode::invalid_input);
}

TEST_CASE("config parsing and validation") {
  const auto c = config_from_json_text(R"({
    "dataset": 2, "scenarios": ["known", "mc-dropout-baseline"],
    "interventions": ["soft:1", "hard:10x"], "alphas": [0.05], "seeds": 3,
    "error_bound": 4, "epsilon": 0.01, "mlp": {"epochs": 12, "layer_widths": [8, 8]},
    "density": {"grouping": "kernel-weighted"}, "split_fractions": [0.5, 0.2, 0.2, 0.1]
  })");
  CHECK(c.dataset_id == 2);
  CHECK(c.scenarios.size() == 2);
  CHECK(c.scenarios[1] == Scenario::mc_dropout);
  CHECK(c.interventions[1].label() == "hard:10x");
  CHECK(c.alphas == std::vector<double>{0.05});
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(c.solver.error_bound == 4.0);
  CHECK(c.mlp.epochs == 12);
  CHECK(c.mlp.layer_widths == std::vector<int>{8, 8});
  CHECK(c.density.grouping == CovariateGrouping::kernel_weighted);
  CHECK(c.fractions.train == 0.5);
  c.validate();

  CHECK(parse_scenario("unknown-propensity") == Scenario::unknown_propensity);
  CHECK(std::string(to_string(Scenario::known_propensity)) == "known-propensity");
  CHECK_ERROR_CODE(parse_scenario("oracle"), ErrorCode::invalid_input);
  CHECK_ERROR_CODE(config_from_json_text("{not json"), ErrorCode::invalid_input);
  CHECK_ERROR_CODE(config_from_json_text(R"({"alphas": "x"})"), ErrorCode::invalid_input);

  ExperimentConfig bad = small_config();
  bad.alphas = {1.2};
  CHECK_ERROR_CODE(bad.validate(), ErrorCode::invalid_input);
  bad = small_config();
  bad.seeds.clear();
  CHECK_ERROR_CODE(bad.validate(), ErrorCode::invalid_input);
  bad = small_config();
  bad.interventions.clear();
  CHECK_ERROR_CODE(bad.validate(), ErrorCode::invalid_input);
}

TEST_CASE("experiment pipeline, export and determinism") {
  const ExperimentConfig config = small_config();
  const CoverageReport report = run_experiment(config);
  CHECK(report.cells.size() == 2 * 3 * 2 * 2);
  for (const auto& c : report.cells) {
    CHECK(c.ok());
    CHECK(c.coverage >= 0.0);
    CHECK(c.coverage <= 1.0);
    CHECK(c.width >= 0.0);
    CHECK(c.n_test == 100);
  }
  for (std::size_t i = 1; i < report.cells.size(); ++i) {
    const auto& l = report.cells[i - 1];
    const auto& r = report.cells[i];
    CHECK(std::tie(l.scenario, l.intervention, l.alpha, l.seed) <
          std::tie(r.scenario, r.intervention, r.alpha, r.seed));
  }
  const auto agg = report.find(Scenario::known_propensity, "soft:5", 0.1);
  CHECK(agg.seeds_ok == 2);
  CHECK_THROWS(report.find(Scenario::known_propensity, "soft:99", 0.1));

  const std::string a = temp_dir("a");
  const std::string b = temp_dir("b");
  export_plot_data(report, a);
  export_plot_data(run_experiment(config), b);
  for (const char* f : {"coverage.csv", "intervals.csv"}) {
    CHECK(slurp(a + "/" + f) == slurp(b + "/" + f));
  }
  CHECK(line_count(a + "/coverage.csv") == report.cells.size() + 1);
  CHECK(std::filesystem::exists(a + "/summary.json"));
  CHECK(std::filesystem::exists(a + "/runtime.csv"));

  // interval list round-trips exactly
  const auto back = read_intervals_csv(a + "/intervals.csv");
  REQUIRE(back.size() == report.intervals.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& l = report.intervals[i];
    const auto& r = back[i];
    CHECK((l.x == r.x && l.a == r.a && l.center == r.center && l.lower == r.lower &&
           l.upper == r.upper && l.y_true == r.y_true && l.alpha == r.alpha && l.method == r.method));
  }

  const std::string rpath = a + "/report.json";
  write_report_json(report, rpath);
  const auto reread = read_report_json(rpath);
  REQUIRE(reread.cells.size() == report.cells.size());
  CHECK(reread.cells[3].coverage == report.cells[3].coverage);
  CHECK(reread.cells[3].width == report.cells[3].width);
  CHECK(reread.intervals.size() == report.intervals.size());
}

TEST_CASE("export edge cases") {
  CoverageReport empty;
  const std::string dir = temp_dir("empty");
  export_plot_data(empty, dir);
  CHECK(line_count(dir + "/intervals.csv") == 1);
  CHECK(line_count(dir + "/coverage.csv") == 1);

  CoverageReport one;
  one.cells.push_back({Scenario::unknown_propensity, "hard:5x", 0.1, 4, 0.9, 0.3, 1.5, 100, ""});
  const std::string d1 = temp_dir("one");
  export_plot_data(one, d1);
  CHECK(line_count(d1 + "/coverage.csv") == 2);
  CHECK(slurp(d1 + "/coverage.csv").find("unknown-propensity,hard:5x,0.10000000000000001,4,") !=
        std::string::npos);

  const auto f = std::filesystem::path(d1) / "file";
  std::ofstream(f.string()) << "x";
  CHECK_ERROR_CODE(export_plot_data(one, (f / "sub").string()), ErrorCode::io);
}

TEST_CASE("failing cells are recorded") {
  ExperimentConfig c = small_config();
  c.seeds = {0};
  c.scenarios = {Scenario::known_propensity};
  c.interventions = {parse_intervention("soft:50"), parse_intervention("soft:1")};
  const auto report = run_experiment(c);
  int failed = 0;
  for (const auto& cell : report.cells) {
    if (cell.intervention == "soft:50") {
      CHECK(!cell.ok());
      ++failed;
    } else {
      CHECK(cell.ok());
    }
  }
  CHECK(failed == 2);
  const auto agg = report.find(Scenario::known_propensity, "soft:50", 0.1);
  CHECK(agg.seeds_failed == 1);
}

TEST_CASE("ite experiment runs") {
  IteConfig c;
  c.seeds = {0};
  c.generator.n_train = 600;
  c.generator.n_validation = 100;
  c.generator.n_calibration = 200;
  c.generator.n_test_per_intervention = 100;
  c.mlp.epochs = 30;
  const auto r = run_ite_experiment(c);
  REQUIRE(r.size() == 1);
  CHECK(r[0].error.empty());
  CHECK(r[0].coverage >= 0.0);
  CHECK(r[0].mean_width > 0.0);
}
