#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "test_util.hpp"
#include "ccp/io.hpp"

using namespace ccp;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ccp_test_io";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("number formatting round-trips exactly") {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 10000; ++i) {
    std::uint64_t bits = rng();
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(std::isnan(parse_double(format_double(std::nan("")))));
  CHECK(parse_double(format_double(INFINITY)) == INFINITY);
  CHECK(parse_double(format_double(-INFINITY)) == -INFINITY);
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK_ERROR_CODE(parse_double("1.5x"), ErrorCode::invalid_input);
  CHECK_ERROR_CODE(parse_double("abc"), ErrorCode::invalid_input);
}

TEST_CASE("dataset csv round trip") {
  GeneratorSpec spec;
  spec.n_train = 300;
  spec.n_validation = 50;
  spec.n_calibration = 100;
  spec.n_test_per_intervention = 40;
  spec.seed = 3;
  const Dataset d = generate(spec);
  const std::string path = temp_path("data.csv");
  write_dataset_csv(path, d);
  const Dataset back = read_dataset_csv(path);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& l = d.records()[i];
    const auto& r = back.records()[i];
    CHECK(l.sample.x == r.sample.x);
    CHECK(l.sample.a == r.sample.a);
    CHECK(l.sample.y == r.sample.y);
    CHECK(l.y_true == r.y_true);
    CHECK(l.split == r.split);
  }

  const std::string manifest = temp_path("data.json");
  write_manifest(manifest, spec, "data.csv");
  std::ifstream in(manifest);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"n_calibration\": 100") != std::string::npos);
}

TEST_CASE("user csv without a split column") {
  const std::string path = temp_path("user.csv");
  {
    std::ofstream out(path);
    out << "x_0,x_1,a,y\n";
    for (int i = 0; i < 100; ++i) out << i % 3 << ',' << i * 0.5 << ',' << i << ',' << i * 2 << "\n";
  }
  const Dataset d = read_dataset_csv(path, {0.6, 0.1, 0.2, 0.1}, 7);
  CHECK(d.dim() == 2);
  CHECK(d.count(Split::train) == 60);
  CHECK(d.count(Split::validation) == 10);
  CHECK(d.count(Split::calibration) == 20);
  CHECK(d.count(Split::test) == 10);
  CHECK(std::isnan(d.records()[0].y_true));
  const Dataset again = read_dataset_csv(path, {0.6, 0.1, 0.2, 0.1}, 7);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.records()[i].split == again.records()[i].split);
  CHECK_ERROR_CODE(read_dataset_csv(path, {0.5, 0.1, 0.2, 0.1}, 7), ErrorCode::invalid_input);

  const std::string bad = temp_path("bad.csv");
  {
    std::ofstream out(bad);
    out << "a,y\n1,2\n";
  }
  CHECK_ERROR_CODE(read_dataset_csv(bad), ErrorCode::invalid_input);
  {
    std::ofstream out(bad);
    out << "x_0,a,y\n1,2\n";
  }
  CHECK_ERROR_CODE(read_dataset_csv(bad), ErrorCode::io);
  CHECK_ERROR_CODE(read_csv(temp_path("missing.csv")), ErrorCode::io);
}
