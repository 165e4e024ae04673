#pragma once

// Synthetic benchmarks with known propensity and structural outcome.
//
// Dataset 1: X ~ U{1,2,3,4}; A ~ 0.3 U[0, 5X) + 0.7 U[5X, 40];
//            Y = sin(pi/6 (0.1 A - 0.5 X)) + N(0, 0.1^2).
// Dataset 2: X ~ U{1,2,3,4}; A ~ N(5X, 10^2);
//            Y = sin(pi/2 (0.1 A - 0.1 X)) + N(0, 0.1^2).

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include "ccp/core.hpp"

namespace ccp {

inline constexpr double outcome_noise_sd = 0.1;

struct GeneratorSpec {
  int dataset_id = 1;
  int n_train = 2000;  // includes the validation carve-out
  int n_validation = 200;
  int n_calibration = 1000;
  int n_test_per_intervention = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic 64-bit seed for a labelled substream of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

double true_propensity(int dataset_id, double a, double x);
double true_outcome(int dataset_id, double a, double x);

// One observational draw (x, a, y) together with its noiseless outcome.
LabeledSample draw_sample(int dataset_id, std::mt19937_64& rng);

// Train (minus validation), validation, calibration and observational test
// splits, each from an independent substream.
Dataset generate(const GeneratorSpec& spec);

class TruePropensity final : public ConditionalDensity {
public:
  explicit TruePropensity(int dataset_id);
  double density(double a, std::span<const double> x) const override;

private:
  int dataset_id_;
};

// A test unit under an intervention: observed treatment a, intervened
// treatment a_star and potential outcome Y(a_star) = y_true + fresh noise.
struct TestUnit {
  std::vector<double> x;
  double a = 0.0;
  double a_star = 0.0;
  double y_true = 0.0;
  double y = 0.0;
};

// Soft shifts redraw units until a + delta stays inside the propensity support;
// a shift that almost never does throws positivity_violation.
std::vector<TestUnit> draw_test_units(int dataset_id, const Intervention& intervention, int n,
                                      std::uint64_t seed);

}  // namespace ccp
