#include "ccp/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccp/core.hpp"

namespace ccp {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::invalid_input, "alpha must lie in (0,1)");
  }
}

// Cumulative-weight comparisons tolerate this much relative rounding.
constexpr double cum_tolerance = 1e-12;

struct TieSums {
  double below = 0.0;  // weight of S_i < theta w_i
  double tied = 0.0;
  double above = 0.0;  // weight of S_i > theta w_i
};

// Value shared by tied multipliers so that sum_i eta_i w_i = 0.
double tied_eta(const TieSums& t, double alpha, bool boundary) {
  const double residual = alpha * t.below - (1.0 - alpha) * t.above;
  if (t.tied <= 0.0) {
    if (!boundary && std::abs(residual) > 1e-8 * std::max(1.0, t.below + t.above)) {
      throw Error(ErrorCode::inconsistent_solution,
                  "stationarity unreachable: no tied indices at an interior theta");
    }
    return 0.0;
  }
  const double value = residual / t.tied;
  if (!boundary && (value < -alpha - 1e-9 || value > 1.0 - alpha + 1e-9)) {
    throw Error(ErrorCode::inconsistent_solution,
                "stationarity requires a tied multiplier outside [-alpha, 1-alpha]");
  }
  return std::clamp(value, -alpha, 1.0 - alpha);
}

}  // namespace

double pinball_loss(double theta, double s, double alpha) {
  check_alpha(alpha);
  if (!std::isfinite(theta) || !std::isfinite(s)) {
    throw Error(ErrorCode::invalid_input, "pinball_loss: non-finite input");
  }
  return s >= theta ? (1.0 - alpha) * (s - theta) : alpha * (theta - s);
}

double scalar_quantile(std::span<const double> scores, double imputed_s, double alpha) {
  check_alpha(alpha);
  if (scores.empty()) {
    throw Error(ErrorCode::invalid_input, "scalar_quantile: empty score list");
  }
  std::vector<double> all(scores.begin(), scores.end());
  all.push_back(imputed_s);
  std::sort(all.begin(), all.end());
  const double m = static_cast<double>(all.size());
  const double target = (1.0 - alpha) * m - cum_tolerance * m;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (static_cast<double>(k + 1) >= target) return all[k];
  }
  return all.back();
}

double ray_objective(double theta, std::span<const double> scores,
                     std::span<const double> weights, double alpha) {
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    total += pinball_loss(theta * weights[i], scores[i], alpha);
  }
  return total;
}

DualSolution weighted_theta(std::span<const double> scores, std::span<const double> weights,
                            double alpha, ThetaBounds bounds) {
  check_alpha(alpha);
  if (scores.empty() || scores.size() != weights.size()) {
    throw Error(ErrorCode::invalid_input, "weighted_theta: scores and weights must be equal, non-empty");
  }
  if (!(bounds.lower <= bounds.upper) || bounds.lower < 0.0) {
    throw Error(ErrorCode::invalid_input, "weighted_theta: invalid theta bounds");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw Error(ErrorCode::invalid_weight,
                  "weight at index " + std::to_string(i) + " must be finite and positive");
    }
    if (!std::isfinite(scores[i])) {
      throw Error(ErrorCode::invalid_input, "score at index " + std::to_string(i) + " is not finite");
    }
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> ratio(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) ratio[i] = scores[i] / weights[i];
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return ratio[l] < ratio[r]; });

  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double target = (1.0 - alpha) * total - cum_tolerance * total;
  double theta_u = ratio[order.back()];
  double cum = 0.0;
  for (std::size_t i : order) {
    cum += weights[i];
    if (cum >= target) {
      theta_u = ratio[i];
      break;
    }
  }

  DualSolution sol;
  sol.boundary = theta_u <= bounds.lower || theta_u > bounds.upper;
  sol.theta_star = std::clamp(theta_u, bounds.lower, bounds.upper);
  sol.eta = recover_eta(sol.theta_star, scores, weights, alpha, sol.boundary);
  sol.objective = ray_objective(sol.theta_star, scores, weights, alpha);
  return sol;
}

std::vector<double> recover_eta(double theta_star, std::span<const double> scores,
                                std::span<const double> weights, double alpha, bool boundary) {
  check_alpha(alpha);
  if (scores.size() != weights.size()) {
    throw Error(ErrorCode::invalid_input, "recover_eta: size mismatch");
  }
  double max_abs = 0.0;
  for (double s : scores) max_abs = std::max(max_abs, std::abs(s));
  const double tol = tie_tolerance * max_abs;

  std::vector<double> eta(scores.size());
  std::vector<std::size_t> tied;
  TieSums sums;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double d = scores[i] - theta_star * weights[i];
    if (d > tol) {
      eta[i] = 1.0 - alpha;
      sums.above += weights[i];
    } else if (d < -tol) {
      eta[i] = -alpha;
      sums.below += weights[i];
    } else {
      tied.push_back(i);
      sums.tied += weights[i];
    }
  }
  const double t = tied_eta(sums, alpha, boundary);
  for (std::size_t i : tied) eta[i] = t;
  return eta;
}

AugmentedRay::AugmentedRay(std::span<const double> scores, std::span<const double> weights) {
  if (scores.size() != weights.size()) {
    throw Error(ErrorCode::invalid_input, "AugmentedRay: size mismatch");
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw Error(ErrorCode::invalid_input, "score at index " + std::to_string(i) + " is not finite");
    }
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw Error(ErrorCode::invalid_weight,
                  "weight at index " + std::to_string(i) + " must be finite and non-negative");
    }
    max_abs_score_ = std::max(max_abs_score_, std::abs(scores[i]));
    if (weights[i] > 0.0) {
      keep.push_back(i);
    } else if (scores[i] >= 0.0) {
      dropped_positive_ += scores[i];
    } else {
      dropped_negative_ -= scores[i];
    }
  }
  std::stable_sort(keep.begin(), keep.end(), [&](std::size_t l, std::size_t r) {
    return scores[l] / weights[l] < scores[r] / weights[r];
  });
  prefix_.assign(1, 0.0);
  score_prefix_.assign(1, 0.0);
  min_weight_ = std::numeric_limits<double>::infinity();
  for (std::size_t i : keep) {
    ratios_.push_back(scores[i] / weights[i]);
    scores_.push_back(scores[i]);
    weights_.push_back(weights[i]);
    prefix_.push_back(prefix_.back() + weights[i]);
    score_prefix_.push_back(score_prefix_.back() + scores[i]);
    min_weight_ = std::min(min_weight_, weights[i]);
  }
}

AugmentedRay::Fit AugmentedRay::fit(double imputed_s, double test_weight, double alpha,
                                    ThetaBounds bounds) const {
  check_alpha(alpha);
  if (!(test_weight >= 0.0) || !std::isfinite(test_weight)) {
    throw Error(ErrorCode::invalid_weight, "test-point weight must be finite and non-negative");
  }
  if (!std::isfinite(imputed_s)) {
    throw Error(ErrorCode::invalid_input, "imputed score must be finite");
  }
  if (test_weight == 0.0) {
    if (ratios_.empty()) {
      throw Error(ErrorCode::invalid_weight, "no positive weight in the augmented problem");
    }
    const double target = (1.0 - alpha) * prefix_.back() - cum_tolerance * prefix_.back();
    const auto it = std::lower_bound(prefix_.begin() + 1, prefix_.end(), target);
    const double theta_u = it != prefix_.end() ? ratios_[static_cast<std::size_t>(it - prefix_.begin()) - 1]
                                               : ratios_.back();
    return {std::clamp(theta_u, bounds.lower, bounds.upper),
            theta_u <= bounds.lower || theta_u > bounds.upper};
  }
  const double test_ratio = imputed_s / test_weight;
  const double total = prefix_.back() + test_weight;
  const double target = (1.0 - alpha) * total - cum_tolerance * total;

  // Calibration points with ratio <= test_ratio precede the test point.
  const std::size_t p = static_cast<std::size_t>(
      std::upper_bound(ratios_.begin(), ratios_.end(), test_ratio) - ratios_.begin());
  double theta_u;
  if (prefix_[p] + test_weight >= target) {
    // First calibration index whose own cumulative weight reaches the target.
    const auto it = std::lower_bound(prefix_.begin() + 1, prefix_.end(), target);
    const std::size_t k = static_cast<std::size_t>(it - prefix_.begin()) - 1;
    theta_u = (it != prefix_.end() && k < p) ? ratios_[k] : test_ratio;
  } else {
    const auto it = std::lower_bound(prefix_.begin() + static_cast<std::ptrdiff_t>(p) + 1,
                                     prefix_.end(), target - test_weight);
    const std::size_t k = static_cast<std::size_t>(it - prefix_.begin()) - 1;
    theta_u = it != prefix_.end() ? ratios_[k] : ratios_.back();
  }

  Fit out;
  out.boundary = theta_u <= bounds.lower || theta_u > bounds.upper;
  out.theta_star = std::clamp(theta_u, bounds.lower, bounds.upper);
  return out;
}

double AugmentedRay::objective(double theta, double imputed_s, double test_weight,
                               double alpha) const {
  // Points with ratio < theta sit below the fit and pay alpha per unit.
  const auto m = static_cast<std::size_t>(
      std::lower_bound(ratios_.begin(), ratios_.end(), theta) - ratios_.begin());
  const double w_below = prefix_[m];
  const double s_below = score_prefix_[m];
  const double w_above = prefix_.back() - w_below;
  const double s_above = score_prefix_.back() - s_below;
  double total = alpha * (theta * w_below - s_below) + (1.0 - alpha) * (s_above - theta * w_above);
  total += (1.0 - alpha) * dropped_positive_ + alpha * dropped_negative_;
  total += pinball_loss(theta * test_weight, imputed_s, alpha);
  return total;
}

double AugmentedRay::eta_last(double imputed_s, double test_weight, double alpha,
                              ThetaBounds bounds) const {
  if (!(test_weight > 0.0)) {
    throw Error(ErrorCode::invalid_weight, "test-point weight must be positive");
  }
  const Fit f = fit(imputed_s, test_weight, alpha, bounds);
  const double theta = f.theta_star;
  const double tol = tie_tolerance * std::max(max_abs_score_, std::abs(imputed_s));

  TieSums sums;
  if (!ratios_.empty()) {
    const double band = tol / min_weight_;
    const auto lo = std::lower_bound(ratios_.begin(), ratios_.end(), theta - band) - ratios_.begin();
    const auto hi = std::upper_bound(ratios_.begin(), ratios_.end(), theta + band) - ratios_.begin();
    sums.below = prefix_[static_cast<std::size_t>(lo)];
    sums.above = prefix_.back() - prefix_[static_cast<std::size_t>(hi)];
    for (auto i = static_cast<std::size_t>(lo); i < static_cast<std::size_t>(hi); ++i) {
      const double d = scores_[i] - theta * weights_[i];
      if (d > tol) {
        sums.above += weights_[i];
      } else if (d < -tol) {
        sums.below += weights_[i];
      } else {
        sums.tied += weights_[i];
      }
    }
  }

  const double d = imputed_s - theta * test_weight;
  if (d > tol) {
    sums.above += test_weight;
  } else if (d < -tol) {
    sums.below += test_weight;
  } else {
    sums.tied += test_weight;
  }
  // Stationarity is checked on the same sums either way; only the
  // test multiplier is returned.
  const double t = tied_eta(sums, alpha, f.boundary);
  if (d > tol) return 1.0 - alpha;
  if (d < -tol) return -alpha;
  return t;
}

}  // namespace ccp
