#pragma once

// CSV and JSON persistence for datasets and generator manifests.

#include <cstdint>
#include <string>
#include <vector>

#include "ccp/core.hpp"
#include "ccp/synthdata.hpp"

namespace ccp {

// Shortest text that parses back to the same double ("%.17g").
std::string format_double(double value);
double parse_double(const std::string& text);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name, or -1.
  int column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

// Used when the input has no split column: train / validation / calibration / test.
struct SplitFractions {
  double train = 0.6;
  double validation = 0.1;
  double calibration = 0.2;
  double test = 0.1;

  void validate() const;
};

// Header x_0..x_{d-1},a,y,y_true,split.
void write_dataset_csv(const std::string& path, const Dataset& data);

// Requires columns x_*, a and y; y_true and split are optional. Without a
// split column rows are shuffled with `seed` and assigned by `fractions`.
Dataset read_dataset_csv(const std::string& path, const SplitFractions& fractions = {},
                         std::uint64_t seed = 0);

void write_manifest(const std::string& path, const GeneratorSpec& spec,
                    const std::string& data_file);

}  // namespace ccp
