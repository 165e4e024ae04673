#include "ccp/shift_known.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ccp {

namespace {

// eta_{n+1} < 1 - alpha, with a margin so rounding cannot flap the predicate.
bool below_upper_multiplier(double eta, double alpha) { return eta < 1.0 - alpha - 1e-12; }

double shift_ratio(const ConditionalDensity& propensity, std::span<const double> x, double a,
                   double delta, std::size_t index) {
  const double denom = propensity.density(a, x);
  const double numer = propensity.density(a + delta, x);
  if (!(denom > 0.0) || !std::isfinite(denom) || !std::isfinite(numer) || numer < 0.0) {
    throw Error(ErrorCode::positivity_violation,
                "propensity not positive and finite at index " + std::to_string(index) +
                    " (a=" + std::to_string(a) + ")");
  }
  return numer / denom;
}

}  // namespace

std::vector<double> shift_weights(const ConditionalDensity& propensity,
                                  std::span<const Sample> samples, double delta,
                                  std::span<const double> x_new, double a_new) {
  std::vector<double> w;
  w.reserve(samples.size() + 1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    w.push_back(shift_ratio(propensity, samples[i].x, samples[i].a, delta, i));
  }
  w.push_back(shift_ratio(propensity, x_new, a_new, delta, samples.size()));
  return w;
}

KnownShiftCalibration::KnownShiftCalibration(std::span<const double> scores,
                                             std::span<const double> weights)
    : ray_(scores, weights) {
  if (scores.empty()) {
    throw Error(ErrorCode::invalid_input, "calibration scores are empty");
  }
  max_score_ = *std::max_element(scores.begin(), scores.end());
  min_score_ = *std::min_element(scores.begin(), scores.end());
  if (ray_.size() == 0) {
    throw Error(ErrorCode::invalid_weight, "every calibration weight is zero");
  }
}

KnownShiftProblem KnownShiftProblem::make(std::span<const double> scores,
                                          std::span<const double> weights, double alpha) {
  if (weights.size() != scores.size() + 1) {
    throw Error(ErrorCode::invalid_input, "expected n + 1 weights for n calibration scores");
  }
  KnownShiftProblem p;
  p.calibration = std::make_shared<KnownShiftCalibration>(scores, weights.first(scores.size()));
  p.test_weight = weights.back();
  p.alpha = alpha;
  return p;
}

double eta_last(const KnownShiftProblem& problem, double imputed_s) {
  return problem.calibration->ray().eta_last(imputed_s, problem.test_weight, problem.alpha);
}

double search_s_star_known(const KnownShiftProblem& problem, const SearchOptions& options) {
  const double alpha = problem.alpha;
  const double cal_weight = problem.calibration->ray().total_weight();
  if (alpha * cal_weight < (1.0 - alpha) * problem.test_weight * (1.0 - 1e-12)) {
    return std::numeric_limits<double>::infinity();
  }
  return search_boundary(
      [&](double s) { return below_upper_multiplier(eta_last(problem, s), alpha); },
      problem.calibration->min_score(), problem.calibration->max_score(), options);
}

SoftIntervalEngine::SoftIntervalEngine(const OutcomeModel& predictor,
                                       const ConditionalDensity& propensity,
                                       const CalibratedScores& calib, double delta_a)
    : predictor_(predictor), propensity_(propensity), delta_(delta_a) {
  // Shifted test treatments a* = a + delta have density pi(a* - delta | x),
  // so the tilt is evaluated with offset -delta.
  std::vector<double> w;
  w.reserve(calib.size());
  for (std::size_t i = 0; i < calib.samples.size(); ++i) {
    w.push_back(shift_ratio(propensity, calib.samples[i].x, calib.samples[i].a, -delta_a, i));
  }
  calibration_ = std::make_shared<KnownShiftCalibration>(calib.scores, w);
}

PredictionInterval SoftIntervalEngine::interval(std::span<const double> x_new, double a_new,
                                                double alpha, const SearchOptions& options) const {
  const double a_star = a_new + delta_;
  const double denom = propensity_.density(a_star, x_new);
  const double numer = propensity_.density(a_new, x_new);
  if (!(denom > 0.0) || !std::isfinite(denom) || !(numer > 0.0) || !std::isfinite(numer)) {
    throw Error(ErrorCode::positivity_violation,
                "shifted treatment a*=" + std::to_string(a_star) + " leaves the propensity support");
  }
  KnownShiftProblem problem{calibration_, numer / denom, alpha};
  const double s_star = search_s_star_known(problem, options);
  return build_interval(predictor_.predict(x_new, a_star), s_star, alpha);
}

PredictionInterval interval_soft(const OutcomeModel& predictor, const ConditionalDensity& propensity,
                                 const CalibratedScores& calib, std::span<const double> x_new,
                                 double a_new, double delta_a, double alpha,
                                 const SearchOptions& options) {
  return SoftIntervalEngine(predictor, propensity, calib, delta_a).interval(x_new, a_new, alpha, options);
}

}  // namespace ccp
