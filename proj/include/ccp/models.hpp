#pragma once

// Outcome regressor (small ReLU network with inverted dropout, trained by
// Adam on squared error), the MC-dropout interval baseline, and a Gaussian
// kernel conditional density estimator for the propensity.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccp/core.hpp"

namespace ccp {

struct MlpConfig {
  std::vector<int> layer_widths{16, 16, 16};
  double dropout_rate = 0.1;
  int epochs = 300;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> weights;  // row-major, out x in
  std::vector<double> bias;
};

class Mlp final : public OutcomeModel {
public:
  Mlp() = default;
  Mlp(MlpConfig config, int input_dim);

  // Deterministic mode: dropout disabled (inverted dropout needs no rescaling).
  double predict(std::span<const double> x, double a) const override;

  // Stochastic mode: every hidden unit is dropped with the configured rate.
  double predict_stochastic(std::span<const double> x, double a, std::mt19937_64& rng) const;

  const MlpConfig& config() const noexcept { return config_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  int input_dim() const noexcept { return input_dim_; }

  // Per-epoch mean training loss and validation loss (NaN without validation data).
  std::vector<double> train_loss;
  std::vector<double> validation_loss;

  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);
  void save(const std::string& path) const;
  static Mlp load(const std::string& path);

private:
  friend Mlp train_mlp(const MlpConfig&, std::span<const Sample>, std::span<const Sample>);

  void standardize(std::span<const double> x, double a, std::vector<double>& out) const;
  double forward(std::vector<double> h, std::mt19937_64* rng) const;

  MlpConfig config_;
  int input_dim_ = 0;  // covariate dimension; the network sees input_dim_ + 1 inputs
  std::vector<DenseLayer> layers_;
  std::vector<double> mean_;
  std::vector<double> scale_;
};

Mlp train_mlp(const MlpConfig& config, std::span<const Sample> train,
              std::span<const Sample> validation = {});

// Sample mean-squared error of deterministic predictions against y.
double mean_squared_error(const OutcomeModel& model, std::span<const Sample> samples);

// Type-7 (linear interpolation) empirical quantile at level p in [0, 1].
double linear_quantile(std::vector<double> values, double p);

std::vector<double> mc_dropout_samples(const Mlp& model, std::span<const double> x, double a,
                                       int num_samples, std::uint64_t seed);

// [alpha/2, 1 - alpha/2] linear-interpolation quantiles of the samples; the
// center is the sample mean and s_star the half-width.
PredictionInterval mc_dropout_interval_from_samples(std::span<const double> samples, double alpha);

PredictionInterval mc_dropout_interval(const Mlp& model, std::span<const double> x, double a,
                                       double alpha, int num_samples = 100,
                                       std::uint64_t seed = 0);

enum class CovariateGrouping { discrete_exact, kernel_weighted };

struct ConditionalDensityConfig {
  // bandwidth <= 0 selects Silverman's rule per group.
  double bandwidth = 0.0;
  CovariateGrouping grouping = CovariateGrouping::discrete_exact;
  double covariate_bandwidth = 1.0;  // h_x for kernel-weighted grouping

  void validate() const;
};

// h = 0.9 * min(sd, IQR / 1.34) * m^(-1/5); falls back to sd when the IQR is zero.
double silverman_bandwidth(std::span<const double> values);

class KernelConditionalDensity final : public ConditionalDensity {
public:
  struct Group {
    std::vector<double> treatments;
    double bandwidth = 1.0;
  };

  KernelConditionalDensity() = default;
  KernelConditionalDensity(ConditionalDensityConfig config, std::map<std::vector<double>, Group> groups);
  KernelConditionalDensity(ConditionalDensityConfig config, std::vector<std::vector<double>> covariates,
                           Group pooled);

  // Discrete grouping throws invalid_input for a covariate value never seen in training.
  double density(double a, std::span<const double> x) const override;

  const ConditionalDensityConfig& config() const noexcept { return config_; }
  const std::map<std::vector<double>, Group>& groups() const noexcept { return groups_; }

  void save(std::ostream& out) const;
  static KernelConditionalDensity load(std::istream& in);
  void save(const std::string& path) const;
  static KernelConditionalDensity load(const std::string& path);

private:
  ConditionalDensityConfig config_;
  std::map<std::vector<double>, Group> groups_;
  std::vector<std::vector<double>> covariates_;  // kernel-weighted mode
  Group pooled_;
};

KernelConditionalDensity fit_conditional_density(const ConditionalDensityConfig& config,
                                                 std::span<const Sample> train);

}  // namespace ccp
