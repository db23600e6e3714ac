#include "hypersphere.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace csf {

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::dimension, "dot of mismatched vectors");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

SkillVector sample_uniform_sphere(std::size_t d, Rng& rng) {
  require(d >= 1, ErrorCode::invalid_argument, "skill dimension must be >= 1");
  SkillVector z;
  z.values.resize(d);
  for (;;) {
    for (double& v : z.values) v = rng.normal();
    const double n = norm2(z.values);
    if (n < 1e-12) continue;
    for (double& v : z.values) v /= n;
    return z;
  }
}

SkillVector sample_one_hot(std::size_t d, Rng& rng) {
  require(d >= 1, ErrorCode::invalid_argument, "skill dimension must be >= 1");
  SkillVector z;
  z.mode = SkillMode::one_hot;
  z.values.assign(d, 0.0);
  z.values[rng.index(d)] = 1.0;
  return z;
}

SkillVector sample_skill(SkillMode mode, std::size_t d, Rng& rng) {
  return mode == SkillMode::continuous ? sample_uniform_sphere(d, rng) : sample_one_hot(d, rng);
}

Matrix sample_skills(SkillMode mode, std::size_t d, std::size_t n, Rng& rng) {
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const SkillVector z = sample_skill(mode, d, rng);
    std::copy(z.values.begin(), z.values.end(), out.row(i).begin());
  }
  return out;
}

namespace {

// sum_k (x^2/4)^k Gamma(v+1) / (k! Gamma(k+v+1)); equals
// Gamma(v+1) (2/x)^v I_v(x). Terms are added until they stop contributing.
double normalized_bessel_series(double order, double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 0; k < 10000; ++k) {
    term *= q / ((k + 1.0) * (k + 1.0 + order));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

void check_bessel_range(double order, double x) {
  if (!(x >= 0.0 && x <= 50.0) || !(order >= 0.0 && order <= 31.0))
    fail(ErrorCode::range, "bessel_iv outside supported range: order " + std::to_string(order) +
                               ", x " + std::to_string(x));
}

}  // namespace

double bessel_iv(double order, double x) {
  check_bessel_range(order, x);
  if (x == 0.0) return order == 0.0 ? 1.0 : 0.0;
  const double lead = std::exp(order * std::log(0.5 * x) - std::lgamma(order + 1.0));
  return lead * normalized_bessel_series(order, x);
}

double log_partition_norm(std::size_t d, double norm) {
  require(d >= 2, ErrorCode::invalid_argument, "log_partition needs d >= 2");
  const double order = 0.5 * static_cast<double>(d) - 1.0;
  check_bessel_range(order, norm);
  return std::log(normalized_bessel_series(order, norm));
}

double log_partition(std::span<const double> w) {
  return log_partition_norm(w.size(), norm2(w));
}

McEstimate log_partition_mc(std::span<const double> w, std::size_t n_samples, Rng& rng) {
  require(n_samples >= 2, ErrorCode::invalid_argument, "log_partition_mc needs >= 2 samples");
  const std::size_t d = w.size();
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const SkillVector s = sample_uniform_sphere(d, rng);
    const double e = std::exp(dot(w, s.values));
    const double delta = e - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (e - mean);
  }
  const double var = m2 / static_cast<double>(n_samples - 1);
  McEstimate out;
  out.estimate = std::log(mean);
  out.standard_error = std::sqrt(var / static_cast<double>(n_samples)) / mean;
  return out;
}

double quadratic_approx(std::span<const double> w) {
  require(w.size() >= 2, ErrorCode::invalid_argument, "quadratic_approx needs d >= 2");
  return dot(w, w) / (2.0 * static_cast<double>(w.size()));
}

double vmf_log_density(std::span<const double> z, const VmfParams& params) {
  require(z.size() == params.mean.size(), ErrorCode::dimension, "vMF dimension mismatch");
  require(params.kappa >= 0.0, ErrorCode::domain, "vMF concentration must be >= 0");
  require(std::abs(norm2(z) - 1.0) < 1e-9, ErrorCode::domain, "vMF density needs a unit vector");
  require(std::abs(norm2(params.mean) - 1.0) < 1e-9, ErrorCode::domain, "vMF mean must be unit");
  if (params.kappa == 0.0) return 0.0;
  return params.kappa * dot(params.mean, z) - log_partition_norm(z.size(), params.kappa);
}

std::vector<double> vmf_cosine_bin_probs(std::size_t d, double kappa,
                                         std::span<const double> edges) {
  require(d >= 2, ErrorCode::invalid_argument, "cosine distribution needs d >= 2");
  require(edges.size() >= 2, ErrorCode::invalid_argument, "need at least one bin");
  const double power = 0.5 * (static_cast<double>(d) - 3.0);
  // Substituting t = cos(theta) removes the endpoint singularity at d = 2:
  // density in theta is exp(kappa cos theta) sin^{d-2} theta.
  auto integrate = [&](double t_lo, double t_hi) {
    const double th_lo = std::acos(std::clamp(t_hi, -1.0, 1.0));
    const double th_hi = std::acos(std::clamp(t_lo, -1.0, 1.0));
    constexpr int kSteps = 2000;  // Simpson, even
    const double h = (th_hi - th_lo) / kSteps;
    double s = 0.0;
    for (int i = 0; i <= kSteps; ++i) {
      const double th = th_lo + i * h;
      const double f = std::exp(kappa * (std::cos(th) - 1.0)) * std::pow(std::sin(th), 2.0 * power + 1.0);
      s += f * (i == 0 || i == kSteps ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    return s * h / 3.0;
  };
  const double total = integrate(-1.0, 1.0);
  std::vector<double> probs;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    probs.push_back(integrate(edges[i], edges[i + 1]) / total);
  return probs;
}

ShellSample sample_gaussian_shell(std::span<const double> mu, double sigma, double thickness,
                                  std::size_t n_accept, Rng& rng) {
  const std::size_t d = mu.size();
  const double r = norm2(mu);
  require(d >= 2 && r > 0.0, ErrorCode::invalid_argument, "shell sampling needs d >= 2 and a nonzero mean");
  require(sigma > 0.0 && thickness > 0.0, ErrorCode::invalid_argument, "sigma and thickness must be positive");
  ShellSample out{Matrix(n_accept, d), 0};
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n_accept;) {
    for (std::size_t k = 0; k < d; ++k) x[k] = mu[k] + sigma * rng.normal();
    ++out.proposals;
    const double len = norm2(x);
    if (std::abs(len - r) >= thickness) continue;
    for (std::size_t k = 0; k < d; ++k) out.directions(i, k) = x[k] / len;
    ++i;
  }
  return out;
}

GoodnessOfFit vmf_cosine_chi_square(const Matrix& directions, const VmfParams& params, std::size_t bins) {
  const std::size_t d = directions.cols();
  require(params.mean.size() == d, ErrorCode::dimension, "vMF mean does not match the sample dimension");
  require(bins >= 2, ErrorCode::invalid_argument, "need at least 2 bins");
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(bins);
  const auto probs = vmf_cosine_bin_probs(d, params.kappa, edges);
  std::vector<double> counts(bins, 0.0);
  for (std::size_t i = 0; i < directions.rows(); ++i) {
    const double t = std::clamp(dot(directions.row(i), params.mean), -1.0, 1.0);
    counts[std::min(bins - 1, static_cast<std::size_t>((t + 1.0) * 0.5 * static_cast<double>(bins)))] += 1.0;
  }
  const double n = static_cast<double>(directions.rows());
  std::vector<double> obs, expect;
  double o = 0.0, e = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    o += counts[b];
    e += probs[b] * n;
    if (e >= 5.0) {
      obs.push_back(o);
      expect.push_back(e);
      o = e = 0.0;
    }
  }
  if (e > 0.0 && !expect.empty()) {
    obs.back() += o;
    expect.back() += e;
  }
  require(expect.size() >= 2, ErrorCode::invalid_argument, "too few samples for a chi-square test");
  GoodnessOfFit fit;
  for (std::size_t b = 0; b < obs.size(); ++b) fit.statistic += (obs[b] - expect[b]) * (obs[b] - expect[b]) / expect[b];
  fit.dof = obs.size() - 1;
  fit.p_value = boost::math::cdf(
      boost::math::complement(boost::math::chi_squared_distribution<double>(static_cast<double>(fit.dof)), fit.statistic));
  return fit;
}

}  // namespace csf
