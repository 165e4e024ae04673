#include "ccp/core.hpp"

#include <cmath>
#include <sstream>

namespace ccp {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::invalid_weight: return "invalid-weight";
    case ErrorCode::inconsistent_solution: return "inconsistent-solution";
    case ErrorCode::positivity_violation: return "positivity-violation";
    case ErrorCode::convergence: return "convergence";
    case ErrorCode::degenerate_tilt: return "degenerate-tilt";
    case ErrorCode::training_failure: return "training-failure";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

const char* to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::calibration: return "calibration";
    case Split::test: return "test";
  }
  return "unknown";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "validation" || text == "val") return Split::validation;
  if (text == "calibration" || text == "cal") return Split::calibration;
  if (text == "test") return Split::test;
  throw Error(ErrorCode::invalid_input, "unknown split label '" + text + "'");
}

void Dataset::add(Sample sample, Split split, double y_true) {
  if (records_.empty() && dim_ == 0) dim_ = sample.x.size();
  if (sample.x.size() != dim_ || dim_ == 0) {
    throw Error(ErrorCode::invalid_input, "covariate dimension mismatch");
  }
  if (!std::isfinite(sample.a) || !std::isfinite(sample.y)) {
    throw Error(ErrorCode::invalid_input, "treatment and outcome must be finite");
  }
  records_.push_back({std::move(sample), split, y_true});
}

std::vector<Sample> Dataset::samples(Split split) const {
  std::vector<Sample> out;
  for (const auto& r : records_) {
    if (r.split == split) out.push_back(r.sample);
  }
  return out;
}

std::size_t Dataset::count(Split split) const {
  std::size_t n = 0;
  for (const auto& r : records_) n += (r.split == split);
  return n;
}

NonconformityScore residual_score(const Sample& sample, double prediction) {
  if (!std::isfinite(sample.y) || !std::isfinite(prediction)) {
    throw Error(ErrorCode::invalid_input, "residual_score: non-finite input");
  }
  return {std::abs(sample.y - prediction)};
}

double HardAssignment::a_star(std::span<const double> x) const {
  if (slope != 0.0 && x.empty()) {
    throw Error(ErrorCode::invalid_input, "hard intervention references x but x is empty");
  }
  return intercept + (slope != 0.0 ? slope * x[0] : 0.0);
}

namespace {

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double parse_number(const std::string& text, const std::string& context) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || !std::isfinite(v)) {
    throw Error(ErrorCode::invalid_input, "cannot parse number '" + text + "' in " + context);
  }
  return v;
}

}  // namespace

std::string Intervention::label() const {
  if (const auto* s = std::get_if<SoftShift>(&kind)) {
    return "soft:" + format_number(s->delta);
  }
  const auto& h = std::get<HardAssignment>(kind);
  std::string out = "hard:";
  if (h.slope != 0.0) {
    out += format_number(h.slope) + "x";
    if (h.intercept > 0.0) out += "+" + format_number(h.intercept);
    if (h.intercept < 0.0) out += format_number(h.intercept);
  } else {
    out += format_number(h.intercept);
  }
  return out;
}

Intervention parse_intervention(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw Error(ErrorCode::invalid_input, "intervention must be 'soft:<d>' or 'hard:<expr>': " + text);
  }
  const std::string kind = text.substr(0, colon);
  std::string body = text.substr(colon + 1);
  if (kind == "soft") {
    return {SoftShift{parse_number(body, text)}};
  }
  if (kind != "hard") {
    throw Error(ErrorCode::invalid_input, "unknown intervention kind '" + kind + "'");
  }
  HardAssignment h;
  const auto xpos = body.find('x');
  if (xpos == std::string::npos) {
    h.intercept = parse_number(body, text);
    return {h};
  }
  const std::string coef = body.substr(0, xpos);
  h.slope = coef.empty() ? 1.0 : (coef == "-" ? -1.0 : parse_number(coef, text));
  const std::string rest = body.substr(xpos + 1);
  if (!rest.empty()) {
    if (rest[0] != '+' && rest[0] != '-') {
      throw Error(ErrorCode::invalid_input, "malformed hard intervention '" + text + "'");
    }
    h.intercept = parse_number(rest.substr(rest[0] == '+' ? 1 : 0), text);
  }
  return {h};
}

PredictionInterval build_interval(double center, double s_star, double alpha) {
  if (!(s_star >= 0.0)) {
    throw Error(ErrorCode::invalid_input, "build_interval: s_star must be non-negative");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::invalid_input, "build_interval: alpha must lie in (0,1)");
  }
  if (!std::isfinite(center)) {
    throw Error(ErrorCode::invalid_input, "build_interval: center must be finite");
  }
  return {center, s_star, center - s_star, center + s_star, alpha};
}

double empirical_coverage(std::span<const PredictionInterval> intervals,
                          std::span<const double> true_outcomes) {
  if (intervals.size() != true_outcomes.size() || intervals.empty()) {
    throw Error(ErrorCode::invalid_input, "empirical_coverage: lists must have equal nonzero length");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    hits += intervals[i].contains(true_outcomes[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(intervals.size());
}

CalibratedScores calibrate(const OutcomeModel& model, std::vector<Sample> samples,
                           const ScoreFunction& score) {
  if (samples.empty()) {
    throw Error(ErrorCode::invalid_input, "calibration split is empty");
  }
  CalibratedScores out;
  out.scores.reserve(samples.size());
  for (const auto& s : samples) {
    out.scores.push_back(score(s, model.predict(s.x, s.a)).value);
  }
  out.samples = std::move(samples);
  return out;
}

}  // namespace ccp
