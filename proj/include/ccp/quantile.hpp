#pragma once

// Pinball-loss machinery for the augmented quantile regression over the
// one-parameter class {theta * w_i : theta in [lower, upper]}.
//
// The objective sum_i l_alpha(theta * w_i, S_i) is convex and piecewise
// linear in theta with breakpoints S_i / w_i, so its smallest minimizer is the
// weighted (1 - alpha) lower quantile of the ratios S_i / w_i with weights
// w_i. Everything here evaluates breakpoints exactly.

#include <limits>
#include <span>
#include <vector>

namespace ccp {

double pinball_loss(double theta, double s, double alpha);

// Smallest minimizer of sum_i l(theta, S_i) + l(theta, imputed_s): an
// empirical (1 - alpha) quantile of the augmented multiset.
double scalar_quantile(std::span<const double> scores, double imputed_s, double alpha);

struct ThetaBounds {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
};

struct DualSolution {
  double theta_star = 0.0;
  std::vector<double> eta;
  // Unnormalized: sum_i l_alpha(theta_star * w_i, S_i).
  double objective = 0.0;
  // theta_star sits on a bound of the feasible box, so stationarity need not hold.
  bool boundary = false;
};

double ray_objective(double theta, std::span<const double> scores,
                     std::span<const double> weights, double alpha);

// Relative tolerance under which S_i == theta * w_i counts as a tie.
inline constexpr double tie_tolerance = 1e-9;

DualSolution weighted_theta(std::span<const double> scores, std::span<const double> weights,
                            double alpha, ThetaBounds bounds = {});

// KKT multipliers of the augmented quantile regression at theta_star.
// Tied indices share the value that closes stationarity; off a boundary an
// infeasible tie value throws ErrorCode::inconsistent_solution.
std::vector<double> recover_eta(double theta_star, std::span<const double> scores,
                                std::span<const double> weights, double alpha,
                                bool boundary = false);

// Calibration scores and weights sorted once by ratio, so that each imputed
// test score costs O(log n) instead of a fresh sort. Zero-weight calibration
// points contribute a theta-independent constant and are dropped.
class AugmentedRay {
public:
  AugmentedRay(std::span<const double> scores, std::span<const double> weights);

  std::size_t size() const noexcept { return ratios_.size(); }
  double total_weight() const noexcept { return prefix_.back(); }

  struct Fit {
    double theta_star = 0.0;
    bool boundary = false;
  };

  // test_weight may be 0, in which case the test point does not enter the fit.
  Fit fit(double imputed_s, double test_weight, double alpha, ThetaBounds bounds = {}) const;

  // eta_{n+1} for the augmented problem; identical semantics to
  // weighted_theta + recover_eta on the appended score/weight lists.
  double eta_last(double imputed_s, double test_weight, double alpha,
                  ThetaBounds bounds = {}) const;

  // sum_i l(theta w_i, S_i) over calibration (dropped points included) plus
  // l(theta * test_weight, imputed_s).
  double objective(double theta, double imputed_s, double test_weight, double alpha) const;

private:
  std::vector<double> ratios_;
  std::vector<double> scores_;
  std::vector<double> weights_;
  std::vector<double> prefix_;        // prefix_[k] = sum of the first k weights
  std::vector<double> score_prefix_;  // same for scores
  double dropped_positive_ = 0.0;     // scores of zero-weight points, split by sign
  double dropped_negative_ = 0.0;
  double min_weight_ = 0.0;
  double max_abs_score_ = 0.0;
};

}  // namespace ccp
