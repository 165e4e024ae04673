#include "ccp/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace ccp {

namespace {

constexpr const char* density_magic = "ccp-kde";
constexpr int density_version = 1;

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double kde(const KernelConditionalDensity::Group& g, double a) {
  double total = 0.0;
  for (double t : g.treatments) total += normal_pdf((a - t) / g.bandwidth);
  return total / (static_cast<double>(g.treatments.size()) * g.bandwidth);
}

std::string describe(const std::vector<double>& x) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < x.size(); ++i) out << (i ? "," : "") << x[i];
  out << ')';
  return out.str();
}

KernelConditionalDensity::Group make_group(std::vector<double> treatments, double fixed_h,
                                           const std::string& name) {
  if (treatments.size() < 2) {
    throw Error(ErrorCode::insufficient_data,
                "covariate group " + name + " has fewer than 2 samples");
  }
  KernelConditionalDensity::Group g;
  g.bandwidth = fixed_h > 0.0 ? fixed_h : silverman_bandwidth(treatments);
  if (!(g.bandwidth > 0.0)) {
    throw Error(ErrorCode::insufficient_data,
                "covariate group " + name + " has no treatment spread");
  }
  g.treatments = std::move(treatments);
  return g;
}

void write_group(std::ostream& out, const KernelConditionalDensity::Group& g) {
  out << g.bandwidth << ' ' << g.treatments.size();
  for (double t : g.treatments) out << ' ' << t;
  out << '\n';
}

KernelConditionalDensity::Group read_group(std::istream& in) {
  KernelConditionalDensity::Group g;
  std::size_t m = 0;
  if (!(in >> g.bandwidth >> m)) throw Error(ErrorCode::io, "density file: bad group header");
  g.treatments.resize(m);
  for (double& t : g.treatments) {
    if (!(in >> t)) throw Error(ErrorCode::io, "density file: truncated group");
  }
  return g;
}

std::vector<double> read_vector(std::istream& in) {
  std::size_t d = 0;
  if (!(in >> d)) throw Error(ErrorCode::io, "density file: bad vector length");
  std::vector<double> v(d);
  for (double& x : v) {
    if (!(in >> x)) throw Error(ErrorCode::io, "density file: truncated vector");
  }
  return v;
}

void write_vector(std::ostream& out, const std::vector<double>& v) {
  out << v.size();
  for (double x : v) out << ' ' << x;
}

}  // namespace

void ConditionalDensityConfig::validate() const {
  if (!std::isfinite(bandwidth)) {
    throw Error(ErrorCode::invalid_input, "treatment bandwidth must be finite");
  }
  if (grouping == CovariateGrouping::kernel_weighted &&
      (!(covariate_bandwidth > 0.0) || !std::isfinite(covariate_bandwidth))) {
    throw Error(ErrorCode::invalid_input, "covariate bandwidth must be positive");
  }
}

double silverman_bandwidth(std::span<const double> values) {
  const std::size_t m = values.size();
  if (m < 2) {
    throw Error(ErrorCode::insufficient_data, "bandwidth needs at least 2 samples");
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(m);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(m - 1));
  std::vector<double> sorted(values.begin(), values.end());
  const double iqr = linear_quantile(sorted, 0.75) - linear_quantile(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(m), -0.2);
}

KernelConditionalDensity::KernelConditionalDensity(ConditionalDensityConfig config,
                                                   std::map<std::vector<double>, Group> groups)
    : config_(config), groups_(std::move(groups)) {
  config_.grouping = CovariateGrouping::discrete_exact;
}

KernelConditionalDensity::KernelConditionalDensity(ConditionalDensityConfig config,
                                                   std::vector<std::vector<double>> covariates,
                                                   Group pooled)
    : config_(config), covariates_(std::move(covariates)), pooled_(std::move(pooled)) {
  config_.grouping = CovariateGrouping::kernel_weighted;
  if (covariates_.size() != pooled_.treatments.size()) {
    throw Error(ErrorCode::invalid_input, "covariates and treatments differ in length");
  }
}

double KernelConditionalDensity::density(double a, std::span<const double> x) const {
  if (config_.grouping == CovariateGrouping::discrete_exact) {
    const auto it = groups_.find(std::vector<double>(x.begin(), x.end()));
    if (it == groups_.end()) {
      throw Error(ErrorCode::invalid_input,
                  "covariate value " + describe({x.begin(), x.end()}) + " has no fitted group");
    }
    return kde(it->second, a);
  }
  // Kernel weights over x, normalized in log space so distant x cannot underflow all of them.
  const double hx = config_.covariate_bandwidth;
  std::vector<double> logw(covariates_.size());
  double max_logw = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < covariates_.size(); ++j) {
    if (covariates_[j].size() != x.size()) {
      throw Error(ErrorCode::invalid_input, "covariate dimension mismatch");
    }
    double d2 = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double z = (x[k] - covariates_[j][k]) / hx;
      d2 += z * z;
    }
    logw[j] = -0.5 * d2;
    max_logw = std::max(max_logw, logw[j]);
  }
  double num = 0.0;
  double den = 0.0;
  const double h = pooled_.bandwidth;
  for (std::size_t j = 0; j < covariates_.size(); ++j) {
    const double w = std::exp(logw[j] - max_logw);
    den += w;
    num += w * normal_pdf((a - pooled_.treatments[j]) / h) / h;
  }
  return num / den;
}

KernelConditionalDensity fit_conditional_density(const ConditionalDensityConfig& config,
                                                 std::span<const Sample> train) {
  config.validate();
  if (train.empty()) {
    throw Error(ErrorCode::insufficient_data, "density training set is empty");
  }
  if (config.grouping == CovariateGrouping::discrete_exact) {
    std::map<std::vector<double>, std::vector<double>> by_x;
    for (const Sample& s : train) by_x[s.x].push_back(s.a);
    std::map<std::vector<double>, KernelConditionalDensity::Group> groups;
    for (auto& [x, a] : by_x) groups.emplace(x, make_group(std::move(a), config.bandwidth, describe(x)));
    return KernelConditionalDensity(config, std::move(groups));
  }
  std::vector<std::vector<double>> covariates;
  std::vector<double> treatments;
  for (const Sample& s : train) {
    covariates.push_back(s.x);
    treatments.push_back(s.a);
  }
  return KernelConditionalDensity(config, std::move(covariates),
                                  make_group(std::move(treatments), config.bandwidth, "pooled"));
}

void KernelConditionalDensity::save(std::ostream& out) const {
  out << std::setprecision(17);
  out << density_magic << ' ' << density_version << '\n';
  const bool discrete = config_.grouping == CovariateGrouping::discrete_exact;
  out << (discrete ? "discrete" : "kernel") << ' ' << config_.bandwidth << ' '
      << config_.covariate_bandwidth << '\n';
  if (discrete) {
    out << groups_.size() << '\n';
    for (const auto& [x, g] : groups_) {
      write_vector(out, x);
      out << ' ';
      write_group(out, g);
    }
  } else {
    out << covariates_.size() << '\n';
    for (const auto& x : covariates_) {
      write_vector(out, x);
      out << '\n';
    }
    write_group(out, pooled_);
  }
  if (!out) throw Error(ErrorCode::io, "failed to write density file");
}

KernelConditionalDensity KernelConditionalDensity::load(std::istream& in) {
  std::string magic, mode;
  int version = 0;
  if (!(in >> magic >> version) || magic != density_magic || version != density_version) {
    throw Error(ErrorCode::io, "not a density file of a supported version");
  }
  ConditionalDensityConfig cfg;
  if (!(in >> mode >> cfg.bandwidth >> cfg.covariate_bandwidth)) {
    throw Error(ErrorCode::io, "density file: bad config line");
  }
  std::size_t count = 0;
  if (!(in >> count)) throw Error(ErrorCode::io, "density file: bad count");
  if (mode == "discrete") {
    std::map<std::vector<double>, Group> groups;
    for (std::size_t i = 0; i < count; ++i) {
      auto x = read_vector(in);
      groups.emplace(std::move(x), read_group(in));
    }
    return KernelConditionalDensity(cfg, std::move(groups));
  }
  if (mode != "kernel") throw Error(ErrorCode::io, "density file: unknown grouping " + mode);
  std::vector<std::vector<double>> covariates(count);
  for (auto& x : covariates) x = read_vector(in);
  return KernelConditionalDensity(cfg, std::move(covariates), read_group(in));
}

void KernelConditionalDensity::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path + " for writing");
  save(out);
}

KernelConditionalDensity KernelConditionalDensity::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  return load(in);
}

}  // namespace ccp
