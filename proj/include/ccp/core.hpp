#pragma once

// Shared domain types: samples, datasets, interventions, prediction
// intervals, the error type and the model/density interfaces every other
// module plugs into.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ccp {

enum class ErrorCode {
  invalid_input,
  invalid_weight,
  inconsistent_solution,
  positivity_violation,
  convergence,
  degenerate_tilt,
  training_failure,
  insufficient_data,
  io,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

struct Sample {
  std::vector<double> x;
  double a = 0.0;
  double y = 0.0;
};

enum class Split { train, validation, calibration, test };

const char* to_string(Split split) noexcept;
Split parse_split(const std::string& text);

struct LabeledSample {
  Sample sample;
  Split split = Split::train;
  // Noiseless structural outcome; NaN when unknown (user data).
  double y_true = std::numeric_limits<double>::quiet_NaN();
};

class Dataset {
public:
  Dataset() = default;
  explicit Dataset(std::size_t dim) : dim_(dim) {}

  void add(Sample sample, Split split,
           double y_true = std::numeric_limits<double>::quiet_NaN());

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const std::vector<LabeledSample>& records() const noexcept { return records_; }

  std::vector<Sample> samples(Split split) const;
  std::size_t count(Split split) const;

private:
  std::size_t dim_ = 0;
  std::vector<LabeledSample> records_;
};

struct NonconformityScore {
  double value = 0.0;
};

// Single-sample score callback: (sample, model prediction) -> score.
using ScoreFunction = std::function<NonconformityScore(const Sample&, double)>;

NonconformityScore residual_score(const Sample& sample, double prediction);

struct SoftShift {
  double delta = 0.0;
};

// a*(x) = intercept + slope * x[0]; "hard:7x" is slope 7, "hard:10" intercept 10.
struct HardAssignment {
  double slope = 0.0;
  double intercept = 0.0;

  double a_star(std::span<const double> x) const;
};

struct Intervention {
  std::variant<SoftShift, HardAssignment> kind;

  bool is_soft() const noexcept { return std::holds_alternative<SoftShift>(kind); }
  std::string label() const;
};

// Accepts "soft:<delta>" and "hard:<expr>" with expr one of "<c>", "<c>x",
// "<c>x+<d>", "<c>x-<d>".
Intervention parse_intervention(const std::string& text);

struct PredictionInterval {
  double center = 0.0;
  double s_star = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double alpha = 0.1;

  double width() const noexcept { return upper - lower; }
  bool contains(double y) const noexcept { return lower <= y && y <= upper; }
};

PredictionInterval build_interval(double center, double s_star, double alpha);

double empirical_coverage(std::span<const PredictionInterval> intervals,
                          std::span<const double> true_outcomes);

// Outcome regressor phi(x, a).
class OutcomeModel {
public:
  virtual ~OutcomeModel() = default;
  virtual double predict(std::span<const double> x, double a) const = 0;
};

// Conditional treatment density pi(a | x).
class ConditionalDensity {
public:
  virtual ~ConditionalDensity() = default;
  virtual double density(double a, std::span<const double> x) const = 0;
};

class FunctionModel final : public OutcomeModel {
public:
  explicit FunctionModel(std::function<double(std::span<const double>, double)> fn)
      : fn_(std::move(fn)) {}
  double predict(std::span<const double> x, double a) const override { return fn_(x, a); }

private:
  std::function<double(std::span<const double>, double)> fn_;
};

class FunctionDensity final : public ConditionalDensity {
public:
  explicit FunctionDensity(std::function<double(double, std::span<const double>)> fn)
      : fn_(std::move(fn)) {}
  double density(double a, std::span<const double> x) const override { return fn_(a, x); }

private:
  std::function<double(double, std::span<const double>)> fn_;
};

// Calibration-set scores paired with the samples that produced them.
struct CalibratedScores {
  std::vector<Sample> samples;
  std::vector<double> scores;

  std::size_t size() const noexcept { return scores.size(); }
};

CalibratedScores calibrate(const OutcomeModel& model, std::vector<Sample> samples,
                           const ScoreFunction& score = residual_score);

}  // namespace ccp
