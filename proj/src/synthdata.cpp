#include "ccp/synthdata.hpp"

#include <cmath>
#include <numbers>

namespace ccp {

namespace {

void check_dataset(int dataset_id) {
  if (dataset_id != 1 && dataset_id != 2) {
    throw Error(ErrorCode::invalid_input, "dataset id must be 1 or 2, got " + std::to_string(dataset_id));
  }
}

void check_covariate(double x) {
  if (!(x == 1.0 || x == 2.0 || x == 3.0 || x == 4.0)) {
    throw Error(ErrorCode::invalid_input, "covariate must be one of 1, 2, 3, 4");
  }
}

double draw_treatment(int dataset_id, double x, std::mt19937_64& rng) {
  if (dataset_id == 1) {
    std::bernoulli_distribution low(0.3);
    if (low(rng)) return std::uniform_real_distribution<double>(0.0, 5.0 * x)(rng);
    return std::uniform_real_distribution<double>(5.0 * x, 40.0)(rng);
  }
  return std::normal_distribution<double>(5.0 * x, 10.0)(rng);
}

}  // namespace

void GeneratorSpec::validate() const {
  check_dataset(dataset_id);
  if (n_train <= 0 || n_calibration <= 0 || n_test_per_intervention <= 0) {
    throw Error(ErrorCode::invalid_input, "generator counts must be positive");
  }
  if (n_validation < 0 || n_validation >= n_train) {
    throw Error(ErrorCode::invalid_input, "validation carve-out must be smaller than the train split");
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (std::uint64_t t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

double true_propensity(int dataset_id, double a, double x) {
  check_dataset(dataset_id);
  check_covariate(x);
  if (dataset_id == 1) {
    if (a >= 0.0 && a < 5.0 * x) return 0.3 / (5.0 * x);
    if (a >= 5.0 * x && a <= 40.0) return 0.7 / (40.0 - 5.0 * x);
    return 0.0;
  }
  const double z = (a - 5.0 * x) / 10.0;
  return std::exp(-0.5 * z * z) / (10.0 * std::sqrt(2.0 * std::numbers::pi));
}

double true_outcome(int dataset_id, double a, double x) {
  check_dataset(dataset_id);
  if (dataset_id == 1) return std::sin(std::numbers::pi / 6.0 * (0.1 * a - 0.5 * x));
  return std::sin(std::numbers::pi / 2.0 * (0.1 * a - 0.1 * x));
}

LabeledSample draw_sample(int dataset_id, std::mt19937_64& rng) {
  check_dataset(dataset_id);
  const double x = static_cast<double>(std::uniform_int_distribution<int>(1, 4)(rng));
  const double a = draw_treatment(dataset_id, x, rng);
  const double y_true = true_outcome(dataset_id, a, x);
  const double y = y_true + std::normal_distribution<double>(0.0, outcome_noise_sd)(rng);
  LabeledSample s;
  s.sample = {{x}, a, y};
  s.y_true = y_true;
  return s;
}

Dataset generate(const GeneratorSpec& spec) {
  spec.validate();
  Dataset data(1);
  const struct {
    Split split;
    int count;
  } plan[] = {{Split::train, spec.n_train - spec.n_validation},
              {Split::validation, spec.n_validation},
              {Split::calibration, spec.n_calibration},
              {Split::test, spec.n_test_per_intervention}};
  for (const auto& part : plan) {
    std::mt19937_64 rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(spec.dataset_id),
                                                static_cast<std::uint64_t>(part.split)}));
    for (int i = 0; i < part.count; ++i) {
      LabeledSample s = draw_sample(spec.dataset_id, rng);
      data.add(std::move(s.sample), part.split, s.y_true);
    }
  }
  return data;
}

TruePropensity::TruePropensity(int dataset_id) : dataset_id_(dataset_id) { check_dataset(dataset_id); }

double TruePropensity::density(double a, std::span<const double> x) const {
  if (x.size() != 1) {
    throw Error(ErrorCode::invalid_input, "synthetic propensity expects a scalar covariate");
  }
  return true_propensity(dataset_id_, a, x[0]);
}

std::vector<TestUnit> draw_test_units(int dataset_id, const Intervention& intervention, int n,
                                      std::uint64_t seed) {
  check_dataset(dataset_id);
  if (n <= 0) throw Error(ErrorCode::invalid_input, "number of test units must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, outcome_noise_sd);
  std::vector<TestUnit> units;
  units.reserve(static_cast<std::size_t>(n));
  const long long max_draws = 1000LL * n;
  for (long long draws = 0; units.size() < static_cast<std::size_t>(n); ++draws) {
    if (draws >= max_draws) {
      throw Error(ErrorCode::positivity_violation,
                  intervention.label() + " moves almost every treatment outside the support");
    }
    const LabeledSample s = draw_sample(dataset_id, rng);
    TestUnit u;
    u.x = s.sample.x;
    u.a = s.sample.a;
    if (const auto* soft = std::get_if<SoftShift>(&intervention.kind)) {
      u.a_star = u.a + soft->delta;
      if (!(true_propensity(dataset_id, u.a_star, u.x[0]) > 0.0)) continue;
    } else {
      u.a_star = std::get<HardAssignment>(intervention.kind).a_star(u.x);
    }
    u.y_true = true_outcome(dataset_id, u.a_star, u.x[0]);
    u.y = u.y_true + noise(rng);
    units.push_back(std::move(u));
  }
  return units;
}

}  // namespace ccp
