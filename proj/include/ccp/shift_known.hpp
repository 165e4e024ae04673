#pragma once

// Conformal intervals under a known baseline policy and an additive soft
// intervention A* = A + delta. The shift is represented by the ray class
// theta * w(a, x) with w the likelihood ratio of the shifted treatment
// density; S* is located by the bracketing/bisection search on eta_{n+1}.

#include <memory>
#include <span>
#include <vector>

#include "ccp/core.hpp"
#include "ccp/quantile.hpp"
#include "ccp/search.hpp"

namespace ccp {

// w_i = pi(a_i + delta | x_i) / pi(a_i | x_i) for every sample, followed by the
// same ratio at new point (x_new, a_new). A zero numerator yields weight 0; a
// zero or non-finite denominator (or a non-finite numerator) throws
// ErrorCode::positivity_violation naming the index.
std::vector<double> shift_weights(const ConditionalDensity& propensity,
                                  std::span<const Sample> samples, double delta,
                                  std::span<const double> x_new, double a_new);

// Calibration scores with their shift weights, sorted once. Shared by every
// test point that uses the same intervention.
class KnownShiftCalibration {
public:
  KnownShiftCalibration(std::span<const double> scores, std::span<const double> weights);

  const AugmentedRay& ray() const noexcept { return ray_; }
  double max_score() const noexcept { return max_score_; }
  double min_score() const noexcept { return min_score_; }

private:
  AugmentedRay ray_;
  double max_score_ = 0.0;
  double min_score_ = 0.0;
};

struct KnownShiftProblem {
  std::shared_ptr<const KnownShiftCalibration> calibration;
  double test_weight = 1.0;
  double alpha = 0.1;

  // weights holds n + 1 entries; the last one belongs to the test point.
  static KnownShiftProblem make(std::span<const double> scores, std::span<const double> weights,
                                double alpha);
};

double eta_last(const KnownShiftProblem& problem, double imputed_s);

// Returns +infinity when the test weight alone exceeds the alpha / (1 - alpha)
// share of the calibration weight: then eta_{n+1} < 1 - alpha for every S.
double search_s_star_known(const KnownShiftProblem& problem, const SearchOptions& options = {});

PredictionInterval interval_soft(const OutcomeModel& predictor, const ConditionalDensity& propensity,
                                 const CalibratedScores& calib, std::span<const double> x_new,
                                 double a_new, double delta_a, double alpha,
                                 const SearchOptions& options = {});

// Builds the calibration side of interval_soft once for many test points.
class SoftIntervalEngine {
public:
  SoftIntervalEngine(const OutcomeModel& predictor, const ConditionalDensity& propensity,
                     const CalibratedScores& calib, double delta_a);

  PredictionInterval interval(std::span<const double> x_new, double a_new, double alpha,
                              const SearchOptions& options = {}) const;

private:
  const OutcomeModel& predictor_;
  const ConditionalDensity& propensity_;
  double delta_;
  std::shared_ptr<const KnownShiftCalibration> calibration_;
};

}  // namespace ccp
