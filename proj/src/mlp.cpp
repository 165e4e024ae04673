#include "ccp/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace ccp {

namespace {

constexpr const char* mlp_magic = "ccp-mlp";
constexpr int mlp_version = 1;

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m;
  std::vector<double> v;

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr, long t) {
    if (m.empty()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw Error(ErrorCode::io, "checkpoint: expected '" + token + "', got '" + got + "'");
  }
}

template <typename T>
T read_value(std::istream& in, const char* what) {
  T value{};
  if (!(in >> value)) {
    throw Error(ErrorCode::io, std::string("checkpoint: cannot read ") + what);
  }
  return value;
}

void write_values(std::ostream& out, const std::vector<double>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << (i ? " " : "") << values[i];
  }
  out << '\n';
}

}  // namespace

void MlpConfig::validate() const {
  if (layer_widths.empty()) {
    throw Error(ErrorCode::invalid_input, "MLP needs at least one hidden layer");
  }
  for (int w : layer_widths) {
    if (w <= 0) throw Error(ErrorCode::invalid_input, "layer widths must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw Error(ErrorCode::invalid_input, "dropout rate must lie in [0, 1)");
  }
  if (epochs <= 0 || batch_size <= 0) {
    throw Error(ErrorCode::invalid_input, "epochs and batch size must be positive");
  }
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorCode::invalid_input, "learning rate must be positive");
  }
}

Mlp::Mlp(MlpConfig config, int input_dim) : config_(std::move(config)), input_dim_(input_dim) {
  config_.validate();
  if (input_dim < 0) throw Error(ErrorCode::invalid_input, "negative input dimension");
  int in = input_dim + 1;
  for (int w : config_.layer_widths) {
    layers_.push_back({in, w, std::vector<double>(static_cast<std::size_t>(in * w), 0.0),
                       std::vector<double>(static_cast<std::size_t>(w), 0.0)});
    in = w;
  }
  layers_.push_back({in, 1, std::vector<double>(static_cast<std::size_t>(in), 0.0), {0.0}});
  mean_.assign(static_cast<std::size_t>(input_dim + 1), 0.0);
  scale_.assign(static_cast<std::size_t>(input_dim + 1), 1.0);
}

void Mlp::standardize(std::span<const double> x, double a, std::vector<double>& out) const {
  if (static_cast<int>(x.size()) != input_dim_) {
    throw Error(ErrorCode::invalid_input, "covariate dimension " + std::to_string(x.size()) +
                                              " does not match model input " +
                                              std::to_string(input_dim_));
  }
  out.resize(x.size() + 1);
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean_[j]) / scale_[j];
  out[x.size()] = (a - mean_[x.size()]) / scale_[x.size()];
}

double Mlp::forward(std::vector<double> h, std::mt19937_64* rng) const {
  std::vector<double> next;
  const double keep = 1.0 - config_.dropout_rate;
  std::bernoulli_distribution bern(keep);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& L = layers_[l];
    next.assign(static_cast<std::size_t>(L.out), 0.0);
    for (int o = 0; o < L.out; ++o) {
      double z = L.bias[static_cast<std::size_t>(o)];
      const double* w = &L.weights[static_cast<std::size_t>(o * L.in)];
      for (int i = 0; i < L.in; ++i) z += w[i] * h[static_cast<std::size_t>(i)];
      next[static_cast<std::size_t>(o)] = z;
    }
    if (l + 1 < layers_.size()) {
      for (double& z : next) {
        z = std::max(z, 0.0);
        if (rng != nullptr && config_.dropout_rate > 0.0) z = bern(*rng) ? z / keep : 0.0;
      }
    }
    h.swap(next);
  }
  return h[0];
}

double Mlp::predict(std::span<const double> x, double a) const {
  std::vector<double> in;
  standardize(x, a, in);
  return forward(std::move(in), nullptr);
}

double Mlp::predict_stochastic(std::span<const double> x, double a, std::mt19937_64& rng) const {
  std::vector<double> in;
  standardize(x, a, in);
  return forward(std::move(in), &rng);
}

Mlp train_mlp(const MlpConfig& config, std::span<const Sample> train,
              std::span<const Sample> validation) {
  config.validate();
  if (train.empty()) {
    throw Error(ErrorCode::insufficient_data, "training set is empty");
  }
  const std::size_t d = train.front().x.size();
  Mlp net(config, static_cast<int>(d));
  const std::size_t p = d + 1;
  const double n = static_cast<double>(train.size());

  std::vector<std::vector<double>> inputs(train.size(), std::vector<double>(p));
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].x.size() != d) {
      throw Error(ErrorCode::invalid_input, "inconsistent covariate dimension in training set");
    }
    std::copy(train[i].x.begin(), train[i].x.end(), inputs[i].begin());
    inputs[i][d] = train[i].a;
  }
  for (std::size_t j = 0; j < p; ++j) {
    double mean = 0.0;
    for (const auto& row : inputs) mean += row[j];
    mean /= n;
    double var = 0.0;
    for (const auto& row : inputs) var += (row[j] - mean) * (row[j] - mean);
    const double sd = std::sqrt(var / n);
    net.mean_[j] = mean;
    net.scale_[j] = sd > 0.0 ? sd : 1.0;
  }
  for (auto& row : inputs) {
    for (std::size_t j = 0; j < p; ++j) row[j] = (row[j] - net.mean_[j]) / net.scale_[j];
  }

  std::mt19937_64 rng(config.seed);
  for (DenseLayer& L : net.layers_) {
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / L.in));
    for (double& w : L.weights) w = init(rng);
  }

  const std::size_t nl = net.layers_.size();
  std::vector<Adam> adam_w(nl), adam_b(nl);
  std::vector<std::vector<double>> grad_w(nl), grad_b(nl);
  std::vector<std::vector<double>> act(nl + 1), mask(nl), delta(nl);
  const double keep = 1.0 - config.dropout_rate;
  std::bernoulli_distribution bern(keep);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  long step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double bsize = static_cast<double>(stop - start);
      for (std::size_t l = 0; l < nl; ++l) {
        grad_w[l].assign(net.layers_[l].weights.size(), 0.0);
        grad_b[l].assign(net.layers_[l].bias.size(), 0.0);
      }
      for (std::size_t s = start; s < stop; ++s) {
        const std::size_t idx = order[s];
        act[0] = inputs[idx];
        for (std::size_t l = 0; l < nl; ++l) {
          const DenseLayer& L = net.layers_[l];
          auto& out = act[l + 1];
          out.assign(static_cast<std::size_t>(L.out), 0.0);
          for (int o = 0; o < L.out; ++o) {
            double z = L.bias[static_cast<std::size_t>(o)];
            const double* w = &L.weights[static_cast<std::size_t>(o * L.in)];
            for (int i = 0; i < L.in; ++i) z += w[i] * act[l][static_cast<std::size_t>(i)];
            out[static_cast<std::size_t>(o)] = z;
          }
          if (l + 1 < nl) {
            mask[l].assign(out.size(), 0.0);
            for (std::size_t o = 0; o < out.size(); ++o) {
              if (out[o] <= 0.0) {
                out[o] = 0.0;
                continue;
              }
              const bool kept = config.dropout_rate > 0.0 ? bern(rng) : true;
              mask[l][o] = kept ? 1.0 / keep : 0.0;
              out[o] *= mask[l][o];
            }
          }
        }
        const double err = act[nl][0] - train[idx].y;
        epoch_loss += err * err;

        delta[nl - 1].assign(1, 2.0 * err / bsize);
        for (std::size_t l = nl; l-- > 0;) {
          const DenseLayer& L = net.layers_[l];
          for (int o = 0; o < L.out; ++o) {
            const double g = delta[l][static_cast<std::size_t>(o)];
            if (g == 0.0) continue;
            grad_b[l][static_cast<std::size_t>(o)] += g;
            double* gw = &grad_w[l][static_cast<std::size_t>(o * L.in)];
            for (int i = 0; i < L.in; ++i) gw[i] += g * act[l][static_cast<std::size_t>(i)];
          }
          if (l == 0) break;
          auto& prev = delta[l - 1];
          prev.assign(static_cast<std::size_t>(L.in), 0.0);
          for (int o = 0; o < L.out; ++o) {
            const double g = delta[l][static_cast<std::size_t>(o)];
            if (g == 0.0) continue;
            const double* w = &L.weights[static_cast<std::size_t>(o * L.in)];
            for (int i = 0; i < L.in; ++i) prev[static_cast<std::size_t>(i)] += g * w[i];
          }
          // Mask of layer l - 1 already encodes both ReLU and dropout.
          for (std::size_t i = 0; i < prev.size(); ++i) prev[i] *= mask[l - 1][i];
        }
      }
      ++step;
      for (std::size_t l = 0; l < nl; ++l) {
        adam_w[l].step(net.layers_[l].weights, grad_w[l], config.learning_rate, step);
        adam_b[l].step(net.layers_[l].bias, grad_b[l], config.learning_rate, step);
      }
    }
    epoch_loss /= n;
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::training_failure,
                  "training loss is not finite at epoch " + std::to_string(epoch));
    }
    net.train_loss.push_back(epoch_loss);
    net.validation_loss.push_back(validation.empty()
                                      ? std::numeric_limits<double>::quiet_NaN()
                                      : mean_squared_error(net, validation));
  }
  return net;
}

double mean_squared_error(const OutcomeModel& model, std::span<const Sample> samples) {
  if (samples.empty()) {
    throw Error(ErrorCode::insufficient_data, "no samples for mean squared error");
  }
  double total = 0.0;
  for (const Sample& s : samples) {
    const double e = model.predict(s.x, s.a) - s.y;
    total += e * e;
  }
  return total / static_cast<double>(samples.size());
}

double linear_quantile(std::vector<double> values, double p) {
  if (values.empty()) {
    throw Error(ErrorCode::invalid_input, "quantile of an empty sample");
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::invalid_input, "quantile level must lie in [0, 1]");
  }
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> mc_dropout_samples(const Mlp& model, std::span<const double> x, double a,
                                       int num_samples, std::uint64_t seed) {
  if (num_samples < 2) {
    throw Error(ErrorCode::invalid_input, "MC dropout needs at least two samples");
  }
  std::mt19937_64 rng(seed);
  std::vector<double> out(static_cast<std::size_t>(num_samples));
  for (double& v : out) {
    v = model.predict_stochastic(x, a, rng);
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::invalid_input, "non-finite stochastic prediction");
    }
  }
  return out;
}

PredictionInterval mc_dropout_interval_from_samples(std::span<const double> samples, double alpha) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::invalid_input, "MC dropout needs at least two samples");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::invalid_input, "alpha must lie in (0, 1)");
  }
  std::vector<double> v(samples.begin(), samples.end());
  const double lower = linear_quantile(v, alpha / 2.0);
  const double upper = linear_quantile(v, 1.0 - alpha / 2.0);
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  PredictionInterval out;
  out.center = mean;
  out.lower = lower;
  out.upper = upper;
  out.s_star = 0.5 * (upper - lower);
  out.alpha = alpha;
  return out;
}

PredictionInterval mc_dropout_interval(const Mlp& model, std::span<const double> x, double a,
                                       double alpha, int num_samples, std::uint64_t seed) {
  return mc_dropout_interval_from_samples(mc_dropout_samples(model, x, a, num_samples, seed), alpha);
}

void Mlp::save(std::ostream& out) const {
  out << std::setprecision(17);
  out << mlp_magic << ' ' << mlp_version << '\n';
  out << "widths " << config_.layer_widths.size();
  for (int w : config_.layer_widths) out << ' ' << w;
  out << "\nconfig " << config_.dropout_rate << ' ' << config_.epochs << ' ' << config_.batch_size
      << ' ' << config_.learning_rate << ' ' << config_.seed << '\n';
  out << "input_dim " << input_dim_ << '\n';
  out << "mean ";
  write_values(out, mean_);
  out << "scale ";
  write_values(out, scale_);
  for (const DenseLayer& L : layers_) {
    out << "layer " << L.in << ' ' << L.out << '\n';
    write_values(out, L.weights);
    write_values(out, L.bias);
  }
  if (!out) throw Error(ErrorCode::io, "failed to write model checkpoint");
}

Mlp Mlp::load(std::istream& in) {
  expect_token(in, mlp_magic);
  if (read_value<int>(in, "version") != mlp_version) {
    throw Error(ErrorCode::io, "unsupported model checkpoint version");
  }
  MlpConfig cfg;
  expect_token(in, "widths");
  cfg.layer_widths.resize(read_value<std::size_t>(in, "width count"));
  for (int& w : cfg.layer_widths) w = read_value<int>(in, "width");
  expect_token(in, "config");
  cfg.dropout_rate = read_value<double>(in, "dropout rate");
  cfg.epochs = read_value<int>(in, "epochs");
  cfg.batch_size = read_value<int>(in, "batch size");
  cfg.learning_rate = read_value<double>(in, "learning rate");
  cfg.seed = read_value<std::uint64_t>(in, "seed");
  expect_token(in, "input_dim");
  Mlp net(cfg, read_value<int>(in, "input dimension"));
  expect_token(in, "mean");
  for (double& v : net.mean_) v = read_value<double>(in, "mean");
  expect_token(in, "scale");
  for (double& v : net.scale_) v = read_value<double>(in, "scale");
  for (DenseLayer& L : net.layers_) {
    expect_token(in, "layer");
    if (read_value<int>(in, "layer in") != L.in || read_value<int>(in, "layer out") != L.out) {
      throw Error(ErrorCode::io, "checkpoint layer shape mismatch");
    }
    for (double& w : L.weights) w = read_value<double>(in, "weight");
    for (double& b : L.bias) b = read_value<double>(in, "bias");
  }
  return net;
}

void Mlp::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path + " for writing");
  save(out);
}

Mlp Mlp::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  return load(in);
}

}  // namespace ccp
