#pragma once

// Conformal intervals for a hard intervention a* under an estimated
// propensity pi_hat. The Dirac target is approximated by a Gaussian tilt
//
//   g(a, x) = c_a / (sqrt(2 pi) sigma) * exp(-(a - a*)^2 / (2 sigma^2)) / pi_hat(a | x)
//
// with sigma > 0 and c_a in [1/M, M]. For fixed (sigma, c_a) the equality
// constraints of the tilted quantile regression pin u_i = (S_i - g_i)_+ and
// v_i = (g_i - S_i)_+, so the program reduces to minimizing
// sum_i l_alpha(g_i, S_i) over (sigma, c_a). For fixed sigma the class is a
// ray in c_a, solved exactly at its breakpoints; sigma is searched on a
// log-spaced grid and refined by golden section.

#include <limits>
#include <map>
#include <tuple>
#include <memory>
#include <span>
#include <vector>

#include "ccp/core.hpp"
#include "ccp/quantile.hpp"
#include "ccp/search.hpp"

namespace ccp {

struct GaussianTilt {
  double sigma = 1.0;
  double c_a = 1.0;
  double a_star = 0.0;
};

// pi_hat values in (0, pihat_floor) are raised to the floor before division.
inline constexpr double pihat_floor = 1e-12;

double tilt_value(const GaussianTilt& tilt, double a, double pihat);
double tilt_value(const GaussianTilt& tilt, const ConditionalDensity& pihat, double a,
                  std::span<const double> x);

// Treatment and estimated propensity of one point entering the tilt. For
// covariate-dependent interventions `center` holds a*(x) of this point; NaN
// uses the problem-wide a*.
struct TiltContext {
  double a = 0.0;
  double pihat = 1.0;
  double center = std::numeric_limits<double>::quiet_NaN();
};

struct SigmaBounds {
  double min = 1e-3;
  double max = 1.0;
};

// sigma_min = 1e-3 * range, sigma_max = range, range = max a - min a.
SigmaBounds default_sigma_bounds(std::span<const Sample> calibration);

struct TiltSolverOptions {
  int sigma_grid = 50;
  bool refine = true;
  double refine_tolerance = 1e-10;
};

struct TiltSolution {
  double sigma = 0.0;
  double c_a = 0.0;
  std::vector<double> u;
  std::vector<double> v;
  double objective = 0.0;
  bool pihat_floored = false;
  // c_a sits on 1/M or M, so stationarity in c_a does not hold at the optimum.
  bool c_at_bound = false;
};

// Default M. With M = 2 the optimal c_a sits on the 1/M bound for residual
// scores of typical size, so the tilt loses its stationarity in c_a.
inline constexpr double default_error_bound = 10.0;

struct TiltProblemSpec {
  double a_star = 0.0;
  double error_bound = default_error_bound;  // M
  SigmaBounds sigma_bounds;
  TiltSolverOptions options;
};

// Calibration side of the tilted problem for one a*, with the per-sigma ray
// structures of the grid sorted once. Each imputed score then costs
// O(grid * log n) plus the golden-section refinement.
class HardShiftCalibration {
public:
  HardShiftCalibration(std::span<const double> scores, std::span<const TiltContext> contexts,
                       const TiltProblemSpec& spec);

  struct Optimum {
    double sigma = 0.0;
    double c_a = 0.0;
    double objective = 0.0;
    double g_test = 0.0;
  };

  // Global grid-refined optimum with S_{n+1} = imputed_s at context `test`.
  Optimum optimize(double imputed_s, const TiltContext& test, double alpha) const;

  double v_last(double imputed_s, const TiltContext& test, double alpha) const;

  double search_s_star(const TiltContext& test, double alpha, const SearchOptions& options) const;

  const TiltProblemSpec& spec() const noexcept { return spec_; }
  const std::vector<double>& sigma_grid() const noexcept { return grid_; }
  bool pihat_floored() const noexcept { return floored_; }

private:
  double profile_direct(double sigma, double imputed_s, const TiltContext& test, double alpha,
                        double* c_out) const;

  std::vector<double> scores_;
  std::vector<TiltContext> contexts_;
  TiltProblemSpec spec_;
  std::vector<double> grid_;
  std::vector<AugmentedRay> rays_;
  double min_score_ = 0.0;
  double max_score_ = 0.0;
  bool floored_ = false;
};

// scores and contexts both hold n + 1 entries, the last being the test point.
TiltSolution solve_ps(std::span<const double> scores, std::span<const TiltContext> contexts,
                      double a_star, double alpha, double error_bound, SigmaBounds sigma_bounds,
                      const TiltSolverOptions& options = {});

// scores hold n calibration entries, contexts n + 1.
double v_last(std::span<const double> scores, std::span<const TiltContext> contexts,
              double a_star, double alpha, double error_bound, SigmaBounds sigma_bounds,
              double imputed_s, const TiltSolverOptions& options = {});

double search_s_star_unknown(std::span<const double> scores, std::span<const TiltContext> contexts,
                             double a_star, double alpha, double error_bound,
                             SigmaBounds sigma_bounds, const SearchOptions& search = {},
                             const TiltSolverOptions& options = {});

struct HardIntervalParams {
  double alpha = 0.1;
  double error_bound = default_error_bound;
  // Unset bounds (min <= 0) fall back to default_sigma_bounds.
  SigmaBounds sigma_bounds{0.0, 0.0};
  SearchOptions search;
  TiltSolverOptions solver;
};

PredictionInterval interval_hard(const OutcomeModel& predictor, const ConditionalDensity& pihat,
                                 const CalibratedScores& calib, std::span<const double> x_new,
                                 double a_star, const HardIntervalParams& params);

// Fixed-width variant: sigma = sigma0 and only c_a in [1/M, M] is optimized,
// which is a ray problem with weights phi_sigma0(a_i - a*) / pi_hat_i. The
// set is {S : eta_{n+1}^S < 1 - alpha}.
double search_s_star_fixed_sigma(std::span<const double> scores,
                                 std::span<const TiltContext> contexts, double a_star,
                                 double alpha, double error_bound, double sigma0,
                                 const SearchOptions& search = {});

PredictionInterval interval_fixed_sigma(const OutcomeModel& predictor,
                                        const ConditionalDensity& pihat,
                                        const CalibratedScores& calib,
                                        std::span<const double> x_new, double a_star,
                                        double alpha, double error_bound, double sigma0,
                                        const SearchOptions& search = {});

// Caches calibration structures per a* and S* per (a*, pi_hat(a* | x), alpha)
// for evaluating many test points of one hard intervention. Not thread-safe.
class HardIntervalEngine {
public:
  HardIntervalEngine(const OutcomeModel& predictor, const ConditionalDensity& pihat,
                     const CalibratedScores& calib, HardIntervalParams params);

  PredictionInterval interval(std::span<const double> x_new, double a_star, double alpha);

  // Intervention a*(x): every calibration point is tilted towards its own
  // a*(x_i), so the target is the joint law of (X, a*(X)).
  PredictionInterval interval(std::span<const double> x_new, const HardAssignment& assignment,
                              double alpha);

private:
  const HardShiftCalibration& calibration_for(double a_star);
  const HardShiftCalibration& calibration_for(const HardAssignment& assignment);

  const OutcomeModel& predictor_;
  const ConditionalDensity& pihat_;
  std::vector<double> scores_;
  std::vector<TiltContext> contexts_;
  HardIntervalParams params_;
  std::vector<Sample> samples_;
  std::map<double, std::unique_ptr<HardShiftCalibration>> calibrations_;
  std::map<std::pair<double, double>, std::unique_ptr<HardShiftCalibration>> assigned_;
  std::map<std::tuple<double, double, double>, double> s_star_cache_;
  std::map<std::tuple<double, double, double, double>, double> assigned_cache_;
};

std::vector<TiltContext> tilt_contexts(const ConditionalDensity& pihat,
                                       std::span<const Sample> samples);

}  // namespace ccp
