#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "test_util.hpp"
#include "ccp/models.hpp"
#include "ccp/synthdata.hpp"

using namespace ccp;

namespace {

std::vector<Sample> synthetic(int dataset_id, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) out.push_back(draw_sample(dataset_id, rng).sample);
  return out;
}

bool same_weights(const Mlp& a, const Mlp& b) {
  if (a.layers().size() != b.layers().size()) return false;
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    if (a.layers()[l].weights != b.layers()[l].weights) return false;
    if (a.layers()[l].bias != b.layers()[l].bias) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("mlp learns a constant") {
  std::mt19937_64 rng(31);
  std::vector<Sample> train;
  for (int i = 0; i < 500; ++i) train.push_back({{uniform(rng, 0, 4)}, uniform(rng, 0, 40), 1.7});
  const Mlp m = train_mlp(MlpConfig{}, train);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> x{uniform(rng, 0, 4)};
    CHECK(std::abs(m.predict(x, uniform(rng, 0, 40)) - 1.7) <= 0.05);
  }
  for (double l : m.train_loss) CHECK(std::isfinite(l));
}

TEST_CASE("mlp is seeded and checkpoints round-trip") {
  const auto train = synthetic(1, 400, 32);
  const auto val = synthetic(1, 50, 33);
  MlpConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 5;
  const Mlp a = train_mlp(cfg, train, val);
  const Mlp b = train_mlp(cfg, train, val);
  CHECK(same_weights(a, b));
  cfg.seed = 6;
  CHECK(!same_weights(a, train_mlp(cfg, train, val)));

  std::stringstream buf;
  a.save(buf);
  const Mlp c = Mlp::load(buf);
  CHECK(same_weights(a, c));
  for (const auto& s : val) CHECK(c.predict(s.x, s.a) == a.predict(s.x, s.a));
  CHECK(a.validation_loss.size() == 20);

  std::stringstream bad("not-a-model 1");
  CHECK_ERROR_CODE(Mlp::load(bad), ErrorCode::io);
}

TEST_CASE("mlp fidelity on dataset 1") {
  GeneratorSpec spec;
  spec.seed = 34;
  const Dataset d = generate(spec);
  MlpConfig cfg;
  cfg.seed = 34;
  const Mlp m = train_mlp(cfg, d.samples(Split::train), d.samples(Split::validation));
  const double mse = mean_squared_error(m, d.samples(Split::test));
  MESSAGE("dataset 1 test mse " << mse);
  CHECK(mse <= 0.06);
  for (double l : m.train_loss) CHECK(std::isfinite(l));
}

TEST_CASE("mlp input errors") {
  MlpConfig cfg;
  CHECK_ERROR_CODE(train_mlp(cfg, {}), ErrorCode::insufficient_data);
  cfg.layer_widths = {};
  CHECK_ERROR_CODE(cfg.validate(), ErrorCode::invalid_input);
  cfg = {};
  cfg.dropout_rate = 1.0;
  CHECK_ERROR_CODE(cfg.validate(), ErrorCode::invalid_input);

  // divergence is reported with the epoch
  std::vector<Sample> train;
  for (int i = 0; i < 64; ++i) train.push_back({{1.0 * i}, 1.0 * i, 1e154 * i});
  cfg = {};
  cfg.learning_rate = 1e6;
  cfg.epochs = 50;
  CHECK_ERROR_CODE(train_mlp(cfg, train), ErrorCode::training_failure);
}

TEST_CASE("mc dropout intervals") {
  const std::vector<double> s{0, 1, 2, 3};
  const auto iv = mc_dropout_interval_from_samples(s, 0.5);
  CHECK(iv.lower == doctest::Approx(0.75));
  CHECK(iv.upper == doctest::Approx(2.25));
  CHECK(iv.center == doctest::Approx(1.5));
  CHECK(iv.s_star == doctest::Approx(0.75));

  CHECK(linear_quantile({1, 2, 3, 4, 5}, 0.5) == 3.0);
  CHECK(linear_quantile({1, 2}, 0.25) == doctest::Approx(1.25));

  std::mt19937_64 rng(35);
  std::vector<double> draws(100);
  for (auto& v : draws) v = uniform(rng, -1, 1);
  double prev = INFINITY;
  for (double alpha : {0.01, 0.05, 0.1, 0.2, 0.5, 0.9}) {
    const double w = mc_dropout_interval_from_samples(draws, alpha).width();
    CHECK(w <= prev);
    prev = w;
  }

  const auto train = synthetic(1, 200, 36);
  MlpConfig cfg;
  cfg.epochs = 5;
  cfg.dropout_rate = 0.0;
  const Mlp det = train_mlp(cfg, train);
  const auto zero = mc_dropout_interval(det, train[0].x, train[0].a, 0.1, 20, 1);
  CHECK(zero.width() == 0.0);
  cfg.dropout_rate = 0.1;
  const Mlp drop = train_mlp(cfg, train);
  const auto a = mc_dropout_interval(drop, train[0].x, train[0].a, 0.1, 100, 7);
  const auto b = mc_dropout_interval(drop, train[0].x, train[0].a, 0.1, 100, 7);
  CHECK(a.width() > 0.0);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
}

TEST_CASE("kernel conditional density") {
  ConditionalDensityConfig cfg;
  cfg.bandwidth = 1.0;
  const std::vector<Sample> two{{{1.0}, 0.0, 0.0}, {{1.0}, 2.0, 0.0}};
  const auto kde = fit_conditional_density(cfg, two);
  const std::vector<double> x{1.0};
  CHECK(kde.density(1.0, x) == doctest::Approx(std::exp(-0.5) / std::sqrt(2 * std::numbers::pi)));
  CHECK(kde.density(1.0, x) == doctest::Approx(0.2420).epsilon(1e-3));
  CHECK_ERROR_CODE(kde.density(1.0, std::vector<double>{2.0}), ErrorCode::invalid_input);

  const std::vector<Sample> lonely{{{1.0}, 0.0, 0.0}, {{1.0}, 2.0, 0.0}, {{3.0}, 1.0, 0.0}};
  try {
    fit_conditional_density(cfg, lonely);
    FAIL("expected insufficient data");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::insufficient_data);
    CHECK(std::string(e.what()).find('3') != std::string::npos);
  }

  // Silverman bandwidth, non-negativity and per-group normalization
  const auto train = synthetic(2, 2000, 37);
  const auto fitted = fit_conditional_density({}, train);
  CHECK(fitted.groups().size() == 4);
  for (const auto& [key, group] : fitted.groups()) {
    CHECK(group.bandwidth > 0.0);
    double mass = 0.0;
    const double h = 0.01;
    for (double a = -80.0; a <= 110.0; a += h) {
      const double p = fitted.density(a, key);
      CHECK(p >= 0.0);
      mass += p * h;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
  }

  std::stringstream buf;
  fitted.save(buf);
  const auto back = KernelConditionalDensity::load(buf);
  for (const auto& s : train) {
    if (&s - &train[0] > 50) break;
    CHECK(back.density(s.a, s.x) == fitted.density(s.a, s.x));
  }

  // kernel-weighted grouping still normalizes and accepts unseen covariates
  ConditionalDensityConfig kw;
  kw.grouping = CovariateGrouping::kernel_weighted;
  const auto smooth = fit_conditional_density(kw, train);
  double mass = 0.0;
  for (double a = -80.0; a <= 110.0; a += 0.01) mass += smooth.density(a, std::vector<double>{2.5}) * 0.01;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));

  const std::vector<double> vals{1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(silverman_bandwidth(vals) > 0.0);
  CHECK_ERROR_CODE(silverman_bandwidth(std::vector<double>{1.0}), ErrorCode::insufficient_data);
}
