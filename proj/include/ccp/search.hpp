#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "ccp/core.hpp"

namespace ccp {

struct SearchOptions {
  double epsilon = 1e-3;
  int max_bisections = 200;
  int max_bracket_steps = 200;
};

// Locates the boundary of {S : inside(S)} for a predicate that holds below
// some threshold and fails above it. Bracket expansion starts from
// S_up = max(max_score, 1) and S_low = min(min_score, -1): S_up doubles while
// inside, S_low halves while outside (switching to doubling once |S_low| drops
// under epsilon, since halving a stuck negative bound never terminates).
// Returns the final bracket midpoint clamped to >= 0.
inline double search_boundary(const std::function<bool(double)>& inside, double min_score,
                              double max_score, const SearchOptions& options) {
  if (!(options.epsilon > 0.0)) {
    throw Error(ErrorCode::invalid_input, "epsilon must be positive");
  }
  double s_up = std::max(max_score, 1.0);
  double s_low = std::min(min_score, -1.0);

  for (int k = 0; inside(s_up); ++k) {
    if (k >= options.max_bracket_steps) {
      throw Error(ErrorCode::convergence, "upper bracket not found");
    }
    s_up *= 2.0;
  }
  bool expand = false;
  for (int k = 0; !inside(s_low); ++k) {
    if (k >= options.max_bracket_steps) {
      throw Error(ErrorCode::convergence, "lower bracket not found");
    }
    if (std::abs(s_low) < options.epsilon) expand = true;
    s_low = expand ? 2.0 * s_low : 0.5 * s_low;
  }
  for (int k = 0; s_up - s_low > options.epsilon; ++k) {
    if (k >= options.max_bisections) {
      throw Error(ErrorCode::convergence, "bisection did not reach epsilon");
    }
    const double mid = 0.5 * (s_up + s_low);
    if (inside(mid)) {
      s_low = mid;
    } else {
      s_up = mid;
    }
  }
  return std::max(0.0, 0.5 * (s_up + s_low));
}

struct GoldenResult {
  double x = 0.0;
  double value = 0.0;
};

// Golden-section minimization of f on [lo, hi]; stops once the bracket is
// narrower than tol. Returns the best point evaluated.
inline GoldenResult golden_section_minimize(const std::function<double(double)>& f, double lo,
                                            double hi, double tol, int max_iterations = 200) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  GoldenResult best = fc <= fd ? GoldenResult{c, fc} : GoldenResult{d, fd};
  for (int i = 0; i < max_iterations && (hi - lo) > tol; ++i) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
      if (fc < best.value) best = {c, fc};
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
      if (fd < best.value) best = {d, fd};
    }
  }
  return best;
}

}  // namespace ccp
