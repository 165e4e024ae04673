#include "ccp/shift_unknown.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ccp {

namespace {

double gaussian_kernel(double sigma, double a, double a_star) {
  const double z = (a - a_star) / sigma;
  return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

// Returns the usable pi_hat value, raising it to the floor when tiny.
double checked_pihat(double pihat, bool* floored) {
  if (!std::isfinite(pihat) || !(pihat > 0.0)) {
    throw Error(ErrorCode::positivity_violation,
                "estimated propensity must be positive and finite, got " + std::to_string(pihat));
  }
  if (pihat < pihat_floor) {
    if (floored != nullptr) *floored = true;
    return pihat_floor;
  }
  return pihat;
}

double kernel_weight(double sigma, const TiltContext& ctx, double a_star) {
  const double center = std::isnan(ctx.center) ? a_star : ctx.center;
  return gaussian_kernel(sigma, ctx.a, center) / checked_pihat(ctx.pihat, nullptr);
}

ThetaBounds c_bounds(double error_bound) { return {1.0 / error_bound, error_bound}; }

void check_problem(double alpha, double error_bound, SigmaBounds bounds) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::invalid_input, "alpha must lie in (0, 1)");
  }
  if (!(error_bound >= 1.0) || !std::isfinite(error_bound)) {
    throw Error(ErrorCode::invalid_input, "error bound M must be finite and >= 1");
  }
  if (!(bounds.min > 0.0) || !(bounds.max >= bounds.min) || !std::isfinite(bounds.max)) {
    throw Error(ErrorCode::invalid_input, "sigma bounds must satisfy 0 < min <= max < inf");
  }
}

bool v_positive(double v, double s) { return v > 1e-12 * std::max(1.0, std::abs(s)); }

}  // namespace

double tilt_value(const GaussianTilt& tilt, double a, double pihat) {
  if (!(tilt.sigma > 0.0)) {
    throw Error(ErrorCode::invalid_input, "tilt sigma must be positive");
  }
  return tilt.c_a * gaussian_kernel(tilt.sigma, a, tilt.a_star) / checked_pihat(pihat, nullptr);
}

double tilt_value(const GaussianTilt& tilt, const ConditionalDensity& pihat, double a,
                  std::span<const double> x) {
  return tilt_value(tilt, a, pihat.density(a, x));
}

SigmaBounds default_sigma_bounds(std::span<const Sample> calibration) {
  if (calibration.empty()) {
    throw Error(ErrorCode::insufficient_data, "no calibration samples for sigma bounds");
  }
  const auto [lo, hi] = std::minmax_element(
      calibration.begin(), calibration.end(),
      [](const Sample& l, const Sample& r) { return l.a < r.a; });
  const double range = hi->a - lo->a;
  if (!(range > 0.0)) {
    throw Error(ErrorCode::invalid_input, "calibration treatments have zero range");
  }
  return {1e-3 * range, range};
}

HardShiftCalibration::HardShiftCalibration(std::span<const double> scores,
                                           std::span<const TiltContext> contexts,
                                           const TiltProblemSpec& spec)
    : scores_(scores.begin(), scores.end()), contexts_(contexts.begin(), contexts.end()), spec_(spec) {
  if (scores.size() != contexts.size()) {
    throw Error(ErrorCode::invalid_input, "scores and tilt contexts differ in length");
  }
  check_problem(0.5, spec.error_bound, spec.sigma_bounds);
  if (spec.options.sigma_grid < 1) {
    throw Error(ErrorCode::invalid_input, "sigma grid needs at least one point");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw Error(ErrorCode::invalid_input, "score at index " + std::to_string(i) + " is not finite");
    }
    checked_pihat(contexts[i].pihat, &floored_);
  }
  if (!scores.empty()) {
    min_score_ = *std::min_element(scores.begin(), scores.end());
    max_score_ = *std::max_element(scores.begin(), scores.end());
  }

  const int g = spec.options.sigma_grid;
  const double lmin = std::log(spec.sigma_bounds.min);
  const double lmax = std::log(spec.sigma_bounds.max);
  grid_.reserve(static_cast<std::size_t>(g));
  for (int j = 0; j < g; ++j) {
    grid_.push_back(g == 1 ? spec.sigma_bounds.min : std::exp(lmin + (lmax - lmin) * j / (g - 1)));
  }
  if (spec.sigma_bounds.min == spec.sigma_bounds.max) grid_.assign(1, spec.sigma_bounds.min);

  rays_.reserve(grid_.size());
  std::vector<double> k(scores_.size());
  for (double sigma : grid_) {
    for (std::size_t i = 0; i < contexts_.size(); ++i) {
      k[i] = kernel_weight(sigma, contexts_[i], spec_.a_star);
    }
    rays_.emplace_back(scores_, k);
  }
}

double HardShiftCalibration::profile_direct(double sigma, double imputed_s, const TiltContext& test,
                                            double alpha, double* c_out) const {
  std::vector<double> k(scores_.size());
  for (std::size_t i = 0; i < contexts_.size(); ++i) {
    k[i] = kernel_weight(sigma, contexts_[i], spec_.a_star);
  }
  const AugmentedRay ray(scores_, k);
  const double kt = kernel_weight(sigma, test, spec_.a_star);
  if (ray.size() == 0 && kt == 0.0) return std::numeric_limits<double>::infinity();
  const double c = ray.fit(imputed_s, kt, alpha, c_bounds(spec_.error_bound)).theta_star;
  if (c_out != nullptr) *c_out = c;
  return ray.objective(c, imputed_s, kt, alpha);
}

HardShiftCalibration::Optimum HardShiftCalibration::optimize(double imputed_s,
                                                             const TiltContext& test,
                                                             double alpha) const {
  check_problem(alpha, spec_.error_bound, spec_.sigma_bounds);
  if (!std::isfinite(imputed_s)) {
    throw Error(ErrorCode::invalid_input, "imputed score must be finite");
  }
  const ThetaBounds cb = c_bounds(spec_.error_bound);
  const double inf = std::numeric_limits<double>::infinity();
  Optimum best;
  best.objective = inf;
  std::vector<double> profile(grid_.size(), inf);
  for (std::size_t j = 0; j < grid_.size(); ++j) {
    const double kt = kernel_weight(grid_[j], test, spec_.a_star);
    if (rays_[j].size() == 0 && kt == 0.0) continue;
    const double c = rays_[j].fit(imputed_s, kt, alpha, cb).theta_star;
    const double obj = rays_[j].objective(c, imputed_s, kt, alpha);
    profile[j] = obj;
    if (obj < best.objective - 1e-12 * std::max(1.0, std::abs(obj))) {
      best = {grid_[j], c, obj, c * kt};
    }
  }
  if (!std::isfinite(best.objective)) {
    throw Error(ErrorCode::degenerate_tilt, "tilt weights vanish for every sigma on the grid");
  }

  if (spec_.options.refine && grid_.size() > 1) {
    // every local minimum of the grid profile gets its own bracket
    const std::size_t last = grid_.size() - 1;
    for (std::size_t j = 0; j <= last; ++j) {
      if (!std::isfinite(profile[j])) continue;
      if (j > 0 && profile[j - 1] < profile[j]) continue;
      if (j < last && profile[j + 1] < profile[j]) continue;
      const double lo = std::log(grid_[j == 0 ? 0 : j - 1]);
      const double hi = std::log(grid_[std::min(j + 1, last)]);
      const GoldenResult r = golden_section_minimize(
          [&](double ls) { return profile_direct(std::exp(ls), imputed_s, test, alpha, nullptr); },
          lo, hi, spec_.options.refine_tolerance);
      if (r.value < best.objective - 1e-12 * std::max(1.0, std::abs(best.objective))) {
        const double sigma = std::exp(r.x);
        double c = 0.0;
        const double obj = profile_direct(sigma, imputed_s, test, alpha, &c);
        best = {sigma, c, obj, c * kernel_weight(sigma, test, spec_.a_star)};
      }
    }
  }
  return best;
}

double HardShiftCalibration::v_last(double imputed_s, const TiltContext& test, double alpha) const {
  return std::max(optimize(imputed_s, test, alpha).g_test - imputed_s, 0.0);
}

double HardShiftCalibration::search_s_star(const TiltContext& test, double alpha,
                                           const SearchOptions& options) const {
  return search_boundary(
      [&](double s) { return v_positive(v_last(s, test, alpha), s); },
      scores_.empty() ? 0.0 : min_score_, scores_.empty() ? 0.0 : max_score_, options);
}

TiltSolution solve_ps(std::span<const double> scores, std::span<const TiltContext> contexts,
                      double a_star, double alpha, double error_bound, SigmaBounds sigma_bounds,
                      const TiltSolverOptions& options) {
  if (scores.empty()) {
    throw Error(ErrorCode::invalid_input, "score list is empty");
  }
  if (scores.size() != contexts.size()) {
    throw Error(ErrorCode::invalid_input, "scores and tilt contexts differ in length");
  }
  check_problem(alpha, error_bound, sigma_bounds);
  const std::size_t n = scores.size() - 1;
  const HardShiftCalibration cal(scores.first(n), contexts.first(n),
                                 {a_star, error_bound, sigma_bounds, options});
  bool floored = cal.pihat_floored();
  checked_pihat(contexts[n].pihat, &floored);
  const auto opt = cal.optimize(scores[n], contexts[n], alpha);

  TiltSolution sol;
  sol.sigma = opt.sigma;
  sol.c_a = opt.c_a;
  sol.pihat_floored = floored;
  sol.c_at_bound = opt.c_a <= 1.0 / error_bound || opt.c_a >= error_bound;
  sol.u.resize(scores.size());
  sol.v.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double g = opt.c_a * kernel_weight(opt.sigma, contexts[i], a_star);
    if (!std::isfinite(g)) {
      throw Error(ErrorCode::degenerate_tilt, "tilt value is not finite");
    }
    sol.u[i] = std::max(scores[i] - g, 0.0);
    sol.v[i] = std::max(g - scores[i], 0.0);
    sol.objective += (1.0 - alpha) * sol.u[i] + alpha * sol.v[i];
  }
  return sol;
}

double v_last(std::span<const double> scores, std::span<const TiltContext> contexts, double a_star,
              double alpha, double error_bound, SigmaBounds sigma_bounds, double imputed_s,
              const TiltSolverOptions& options) {
  if (contexts.size() != scores.size() + 1) {
    throw Error(ErrorCode::invalid_input, "expected n + 1 tilt contexts for n scores");
  }
  const std::size_t n = scores.size();
  const HardShiftCalibration cal(scores, contexts.first(n),
                                 {a_star, error_bound, sigma_bounds, options});
  return cal.v_last(imputed_s, contexts[n], alpha);
}

double search_s_star_unknown(std::span<const double> scores, std::span<const TiltContext> contexts,
                             double a_star, double alpha, double error_bound,
                             SigmaBounds sigma_bounds, const SearchOptions& search,
                             const TiltSolverOptions& options) {
  if (contexts.size() != scores.size() + 1) {
    throw Error(ErrorCode::invalid_input, "expected n + 1 tilt contexts for n scores");
  }
  const std::size_t n = scores.size();
  const HardShiftCalibration cal(scores, contexts.first(n),
                                 {a_star, error_bound, sigma_bounds, options});
  return cal.search_s_star(contexts[n], alpha, search);
}

std::vector<TiltContext> tilt_contexts(const ConditionalDensity& pihat,
                                       std::span<const Sample> samples) {
  std::vector<TiltContext> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back({s.a, pihat.density(s.a, s.x)});
  return out;
}

namespace {

SigmaBounds resolve_bounds(const HardIntervalParams& params, std::span<const Sample> calibration) {
  return params.sigma_bounds.min > 0.0 ? params.sigma_bounds : default_sigma_bounds(calibration);
}

}  // namespace

PredictionInterval interval_hard(const OutcomeModel& predictor, const ConditionalDensity& pihat,
                                 const CalibratedScores& calib, std::span<const double> x_new,
                                 double a_star, const HardIntervalParams& params) {
  return HardIntervalEngine(predictor, pihat, calib, params).interval(x_new, a_star, params.alpha);
}

double search_s_star_fixed_sigma(std::span<const double> scores,
                                 std::span<const TiltContext> contexts, double a_star, double alpha,
                                 double error_bound, double sigma0, const SearchOptions& search) {
  if (contexts.size() != scores.size() + 1) {
    throw Error(ErrorCode::invalid_input, "expected n + 1 tilt contexts for n scores");
  }
  check_problem(alpha, error_bound, {sigma0, sigma0});
  const std::size_t n = scores.size();
  std::vector<double> k(n);
  for (std::size_t i = 0; i < n; ++i) k[i] = kernel_weight(sigma0, contexts[i], a_star);
  const AugmentedRay ray(scores, k);
  const double kt = kernel_weight(sigma0, contexts[n], a_star);
  if (!(kt > 0.0)) {
    throw Error(ErrorCode::degenerate_tilt, "test tilt weight vanishes at sigma0");
  }
  const ThetaBounds cb = c_bounds(error_bound);
  const double lo = scores.empty() ? 0.0 : *std::min_element(scores.begin(), scores.end());
  const double hi = scores.empty() ? 0.0 : *std::max_element(scores.begin(), scores.end());
  return search_boundary(
      [&](double s) { return ray.eta_last(s, kt, alpha, cb) < 1.0 - alpha - 1e-12; }, lo, hi,
      search);
}

PredictionInterval interval_fixed_sigma(const OutcomeModel& predictor,
                                        const ConditionalDensity& pihat,
                                        const CalibratedScores& calib,
                                        std::span<const double> x_new, double a_star, double alpha,
                                        double error_bound, double sigma0,
                                        const SearchOptions& search) {
  auto contexts = tilt_contexts(pihat, calib.samples);
  contexts.push_back({a_star, pihat.density(a_star, x_new)});
  const double s_star =
      search_s_star_fixed_sigma(calib.scores, contexts, a_star, alpha, error_bound, sigma0, search);
  return build_interval(predictor.predict(x_new, a_star), s_star, alpha);
}

HardIntervalEngine::HardIntervalEngine(const OutcomeModel& predictor,
                                       const ConditionalDensity& pihat,
                                       const CalibratedScores& calib, HardIntervalParams params)
    : predictor_(predictor),
      pihat_(pihat),
      scores_(calib.scores),
      contexts_(tilt_contexts(pihat, calib.samples)),
      params_(params),
      samples_(calib.samples) {
  params_.sigma_bounds = resolve_bounds(params, calib.samples);
}

const HardShiftCalibration& HardIntervalEngine::calibration_for(double a_star) {
  auto& slot = calibrations_[a_star];
  if (!slot) {
    slot = std::make_unique<HardShiftCalibration>(
        scores_, contexts_,
        TiltProblemSpec{a_star, params_.error_bound, params_.sigma_bounds, params_.solver});
  }
  return *slot;
}

const HardShiftCalibration& HardIntervalEngine::calibration_for(const HardAssignment& assignment) {
  auto& slot = assigned_[{assignment.slope, assignment.intercept}];
  if (!slot) {
    std::vector<TiltContext> contexts = contexts_;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      contexts[i].center = assignment.a_star(samples_[i].x);
    }
    slot = std::make_unique<HardShiftCalibration>(
        scores_, contexts,
        TiltProblemSpec{0.0, params_.error_bound, params_.sigma_bounds, params_.solver});
  }
  return *slot;
}

PredictionInterval HardIntervalEngine::interval(std::span<const double> x_new,
                                                const HardAssignment& assignment, double alpha) {
  const double a_star = assignment.a_star(x_new);
  const TiltContext test{a_star, pihat_.density(a_star, x_new), a_star};
  const auto key = std::make_tuple(assignment.slope, assignment.intercept, test.pihat, alpha);
  auto it = assigned_cache_.find(key);
  if (it == assigned_cache_.end()) {
    const double s = calibration_for(assignment).search_s_star(test, alpha, params_.search);
    it = assigned_cache_.emplace(key, s).first;
  }
  return build_interval(predictor_.predict(x_new, a_star), it->second, alpha);
}

PredictionInterval HardIntervalEngine::interval(std::span<const double> x_new, double a_star,
                                                double alpha) {
  const TiltContext test{a_star, pihat_.density(a_star, x_new)};
  const auto key = std::make_tuple(a_star, test.pihat, alpha);
  auto it = s_star_cache_.find(key);
  if (it == s_star_cache_.end()) {
    const double s = calibration_for(a_star).search_s_star(test, alpha, params_.search);
    it = s_star_cache_.emplace(key, s).first;
  }
  return build_interval(predictor_.predict(x_new, a_star), it->second, alpha);
}

}  // namespace ccp
