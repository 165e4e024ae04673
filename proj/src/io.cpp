#include "ccp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace ccp {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double parse_double(const std::string& text) {
  const std::string t = trim(text);
  if (t == "nan" || t == "NaN" || t.empty()) return std::nan("");
  if (t == "inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [end, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (ec != std::errc() || end != t.data() + t.size())
    throw Error(ErrorCode::invalid_input, "not a number: '" + text + "'");
  return v;
}

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::io, path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  for (auto& h : split_line(line)) table.header.push_back(trim(h));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto row = split_line(line);
    if (row.size() != table.header.size()) {
      throw Error(ErrorCode::io, path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(table.header.size()) + " fields");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path + " for writing");
  const auto write_row = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  };
  write_row(table.header);
  for (const auto& r : table.rows) write_row(r);
  if (!out) throw Error(ErrorCode::io, "failed writing " + path);
}

void SplitFractions::validate() const {
  const double parts[] = {train, validation, calibration, test};
  for (double p : parts) {
    if (!(p >= 0.0)) throw Error(ErrorCode::invalid_input, "split fractions must be non-negative");
  }
  if (std::abs(train + validation + calibration + test - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_input, "split fractions must sum to 1");
  }
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  CsvTable t;
  for (std::size_t j = 0; j < data.dim(); ++j) t.header.push_back("x_" + std::to_string(j));
  for (const char* h : {"a", "y", "y_true", "split"}) t.header.emplace_back(h);
  for (const LabeledSample& r : data.records()) {
    std::vector<std::string> row;
    for (double v : r.sample.x) row.push_back(format_double(v));
    row.push_back(format_double(r.sample.a));
    row.push_back(format_double(r.sample.y));
    row.push_back(format_double(r.y_true));
    row.emplace_back(to_string(r.split));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

Dataset read_dataset_csv(const std::string& path, const SplitFractions& fractions,
                         std::uint64_t seed) {
  const CsvTable t = read_csv(path);
  std::vector<int> xcols;
  for (std::size_t d = 0;; ++d) {
    const int c = t.column("x_" + std::to_string(d));
    if (c < 0) break;
    xcols.push_back(c);
  }
  const int acol = t.column("a");
  const int ycol = t.column("y");
  if (xcols.empty() || acol < 0 || ycol < 0) {
    throw Error(ErrorCode::invalid_input, path + ": need columns x_0.., a and y");
  }
  const int tcol = t.column("y_true");
  const int scol = t.column("split");

  std::vector<Split> splits(t.rows.size());
  if (scol >= 0) {
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      splits[i] = parse_split(trim(t.rows[i][static_cast<std::size_t>(scol)]));
    }
  } else {
    fractions.validate();
    std::vector<std::size_t> order(t.rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const double n = static_cast<double>(order.size());
    const auto c1 = static_cast<std::size_t>(std::llround(fractions.train * n));
    const auto c2 = c1 + static_cast<std::size_t>(std::llround(fractions.validation * n));
    const auto c3 = std::min(order.size(),
                             c2 + static_cast<std::size_t>(std::llround(fractions.calibration * n)));
    for (std::size_t k = 0; k < order.size(); ++k) {
      splits[order[k]] = k < c1 ? Split::train
                         : k < c2 ? Split::validation
                         : k < c3 ? Split::calibration
                                  : Split::test;
    }
  }

  Dataset data(xcols.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    Sample s;
    for (int c : xcols) s.x.push_back(parse_double(row[static_cast<std::size_t>(c)]));
    s.a = parse_double(row[static_cast<std::size_t>(acol)]);
    s.y = parse_double(row[static_cast<std::size_t>(ycol)]);
    const double y_true = tcol >= 0 ? parse_double(row[static_cast<std::size_t>(tcol)]) : std::nan("");
    data.add(std::move(s), splits[i], y_true);
  }
  return data;
}

void write_manifest(const std::string& path, const GeneratorSpec& spec,
                    const std::string& data_file) {
  nlohmann::ordered_json j;
  j["dataset_id"] = spec.dataset_id;
  j["seed"] = spec.seed;
  j["n_train"] = spec.n_train;
  j["n_validation"] = spec.n_validation;
  j["n_calibration"] = spec.n_calibration;
  j["n_test_per_intervention"] = spec.n_test_per_intervention;
  j["data_file"] = data_file;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace ccp
