#pragma once

// Sampling and analytics on the unit sphere S^{d-1}: the uniform skill
// prior, the log-partition log E_z[exp(w.z)] in closed form through the
// modified Bessel function, its Monte Carlo estimate, the quadratic
// small-norm approximation, and von Mises-Fisher log densities.

#include <cstddef>
#include <span>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"

namespace csf {

enum class SkillMode { continuous, one_hot };

struct SkillVector {
  SkillMode mode = SkillMode::continuous;
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
};

struct VmfParams {
  std::vector<double> mean;  // unit norm
  double kappa = 0.0;
};

/// Gaussian draw normalized to unit length; draws with norm < 1e-12 are
/// redrawn.
SkillVector sample_uniform_sphere(std::size_t d, Rng& rng);
SkillVector sample_one_hot(std::size_t d, Rng& rng);
SkillVector sample_skill(SkillMode mode, std::size_t d, Rng& rng);
/// n skills stacked as rows.
Matrix sample_skills(SkillMode mode, std::size_t d, std::size_t n, Rng& rng);

/// Modified Bessel function of the first kind by its power series.
/// Supported range: 0 <= x <= 50, 0 <= order <= 31.
double bessel_iv(double order, double x);

/// log E_{z ~ Unif(S^{d-1})}[exp(w.z)]
///   = log[Gamma(d/2) 2^{d/2-1} I_{d/2-1}(|w|) / |w|^{d/2-1}], d >= 2, |w| <= 50.
double log_partition(std::span<const double> w);
/// Same quantity from the norm alone.
double log_partition_norm(std::size_t d, double norm);

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/// log of the sample mean of exp(w.z) over n uniform z; standard error by the
/// delta method (sd of exp(w.z) / (sqrt(n) * mean)).
McEstimate log_partition_mc(std::span<const double> w, std::size_t n_samples, Rng& rng);

/// |w|^2 / (2d).
double quadratic_approx(std::span<const double> w);

/// Log density with respect to the normalized uniform measure on the sphere.
double vmf_log_density(std::span<const double> z, const VmfParams& params);

/// Probability mass of the cosine t = mean.z falling in each [edges[i],
/// edges[i+1]) under vMF(mean, kappa) in dimension d. Computed by quadrature
/// of exp(kappa t) (1 - t^2)^{(d-3)/2}.
std::vector<double> vmf_cosine_bin_probs(std::size_t d, double kappa,
                                         std::span<const double> edges);

/// Draws from N(mu, sigma^2 I) kept only when ||x| - |mu|| < thickness,
/// each returned as the unit vector x / |x|. The directions follow
/// vMF(mu / |mu|, |mu| / sigma^2) as the shell thins.
struct ShellSample {
  Matrix directions;  // n_accept x d
  std::size_t proposals = 0;
};
ShellSample sample_gaussian_shell(std::span<const double> mu, double sigma, double thickness,
                                  std::size_t n_accept, Rng& rng);

struct GoodnessOfFit {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 0.0;
};

/// Pearson chi-square of the cosines mean.u_i against vMF(mean, kappa),
/// over `bins` equal-width cosine bins; bins expecting fewer than 5 counts
/// are pooled with their neighbour.
GoodnessOfFit vmf_cosine_chi_square(const Matrix& directions, const VmfParams& params, std::size_t bins = 20);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace csf
