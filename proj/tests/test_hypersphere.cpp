#include <cmath>
#include <numbers>

#include "doctest.h"
#include "hypersphere.hpp"

using namespace csf;

namespace {

// Composite Simpson on [a, b].
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

std::vector<double> random_unit(std::size_t d, Rng& rng) { return sample_uniform_sphere(d, rng).values; }

std::vector<double> scaled(std::vector<double> v, double s) {
  for (double& x : v) x *= s;
  return v;
}

}  // namespace

TEST_CASE("sample_uniform_sphere: unit norm and symmetry") {
  Rng rng(1);
  for (std::size_t d : {1u, 2u, 3u, 7u, 64u})
    for (int i = 0; i < 200; ++i) CHECK(std::abs(norm2(sample_uniform_sphere(d, rng).values) - 1.0) < 1e-9);

  const int n = 100000;
  int plus = 0;
  for (int i = 0; i < n; ++i) {
    const auto z = sample_uniform_sphere(1, rng);
    CHECK((z.values[0] == 1.0 || z.values[0] == -1.0));
    plus += z.values[0] > 0;
  }
  CHECK(std::abs(plus / double(n) - 0.5) < 3.0 * 0.5 / std::sqrt(double(n)));

  std::vector<double> mean(3, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto z = sample_uniform_sphere(3, rng);
    for (int k = 0; k < 3; ++k) mean[k] += z.values[k] / n;
  }
  CHECK(norm2(mean) < 4.0 * std::sqrt(3.0) / std::sqrt(3.0 * n));

  CHECK_THROWS_AS(sample_uniform_sphere(0, rng), Error);
}

TEST_CASE("one-hot skills") {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto z = sample_one_hot(5, rng);
    double s = 0;
    int ones = 0;
    for (double v : z.values) {
      s += v;
      ones += v == 1.0;
    }
    CHECK(s == 1.0);
    CHECK(ones == 1);
  }
}

TEST_CASE("bessel_iv: series values") {
  CHECK(bessel_iv(0, 0) == 1.0);
  CHECK(bessel_iv(1, 0) == 0.0);
  const double quad = simpson([](double t) { return std::exp(std::cos(t)); }, 0.0, std::numbers::pi) /
                      std::numbers::pi;
  CHECK(std::abs(quad - 1.2660658777520) < 1e-10);
  CHECK(std::abs(bessel_iv(0, 1.0) - quad) < 1e-10);
  // libstdc++'s special function is an independent implementation.
  for (double v : {0.0, 0.5, 1.0, 3.0, 7.5, 31.0})
    for (double x : {0.01, 0.3, 1.0, 4.0, 12.0, 49.0})
      CHECK(bessel_iv(v, x) == doctest::Approx(std::cyl_bessel_i(v, x)).epsilon(1e-12));
}

TEST_CASE("bessel_iv: range errors") {
  try {
    (void)bessel_iv(0.0, 51.0);
    FAIL("expected range error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::range);
  }
  CHECK_THROWS_AS((void)bessel_iv(40.0, 1.0), Error);
  CHECK_THROWS_AS((void)bessel_iv(-1.0, 1.0), Error);
}

TEST_CASE("log_partition: closed form against quadrature and Monte Carlo") {
  for (std::size_t d : {2u, 3u, 9u}) CHECK(log_partition(std::vector<double>(d, 0.0)) == 0.0);

  const double log_i0_1 = std::log(simpson([](double t) { return std::exp(std::cos(t)); }, 0.0, std::numbers::pi) /
                                   std::numbers::pi);
  const std::vector<double> w2{0.6, 0.8};
  CHECK(std::abs(log_partition(w2) - log_i0_1) < 1e-10);
  CHECK(std::abs(log_partition(w2) - 0.235914) < 1e-6);

  Rng rng(10);
  const auto mc2 = log_partition_mc(w2, 1000000, rng);
  CHECK(std::abs(mc2.estimate - log_partition(w2)) < 3.0 * mc2.standard_error);

  const std::vector<double> w4{0.25, -0.25, 0.25, 0.25};  // norm 0.5
  const auto mc4 = log_partition_mc(w4, 1000000, rng);
  CHECK(std::abs(mc4.estimate - log_partition(w4)) < 3.0 * mc4.standard_error);

  // d = 3 has the elementary form log(sinh r / r).
  const std::vector<double> w3{1.0, 2.0, -0.5};
  const double r = norm2(w3);
  CHECK(log_partition(w3) == doctest::Approx(std::log(std::sinh(r) / r)).epsilon(1e-13));

  CHECK_THROWS_AS((void)log_partition(std::vector<double>{0.3}), Error);
}

TEST_CASE("log_partition_mc: zero vector and sqrt(n) law") {
  Rng rng(11);
  const auto z = log_partition_mc(std::vector<double>{0.0, 0.0, 0.0}, 10, rng);
  CHECK(z.estimate == 0.0);
  CHECK(z.standard_error == 0.0);

  const std::vector<double> w{0.9, -0.4};
  const double se_small = log_partition_mc(w, 1000, rng).standard_error;
  const double se_large = log_partition_mc(w, 100000, rng).standard_error;
  const double ratio = se_small / se_large;
  CHECK(ratio > 7.0);
  CHECK(ratio < 13.0);
  CHECK_THROWS_AS(log_partition_mc(w, 1, rng), Error);
}

TEST_CASE("d = 1 log-partition is log cosh") {
  Rng rng(12);
  for (double w : {0.3, 1.0, 2.5}) {
    const auto mc = log_partition_mc(std::vector<double>{w}, 200000, rng);
    CHECK(std::abs(mc.estimate - std::log(std::cosh(w))) < 1e-12 + 3.0 * mc.standard_error);
  }
}

TEST_CASE("quadratic_approx") {
  CHECK(quadratic_approx(std::vector<double>{0.6, 0.8}) == doctest::Approx(0.25));
  CHECK(quadratic_approx(std::vector<double>{0.0, 0.0}) == 0.0);
  const std::vector<double> small{0.06, 0.08};
  const double q = quadratic_approx(small);
  CHECK(std::abs(log_partition(small) - q) / q < 0.01);
}

TEST_CASE("property: log_partition is rotation invariant and non-negative") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + rng.index(15);
    const double r = rng.uniform(0.0, 20.0);
    const auto a = scaled(random_unit(d, rng), r);
    const auto b = scaled(random_unit(d, rng), r);
    CHECK(std::abs(log_partition(a) - log_partition(b)) < 1e-12 * std::max(1.0, log_partition(a)));
    CHECK(log_partition(a) >= 0.0);
  }
}

TEST_CASE("property: small-norm behaviour is quadratic with slope 1/(2d)") {
  Rng rng(14);
  for (std::size_t d : {2u, 4u, 8u}) {
    for (int i = 0; i < 50; ++i) {
      const double r = rng.uniform(0.0, 0.5);
      const auto w = scaled(random_unit(d, rng), r);
      CHECK(std::abs(log_partition(w) - quadratic_approx(w)) <= 0.1 * r * r * r + 1e-15);
    }
  }
  // Least-squares slope of log_partition against |w|^2 for |w| <= 1.2 at d = 2.
  const int n = 2000;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const auto w = scaled(random_unit(2, rng), 1.2 * std::sqrt(rng.uniform()));
    const double x = dot(w, w), y = log_partition(w);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope >= 0.21);
  CHECK(slope <= 0.26);
}

TEST_CASE("vmf_log_density") {
  Rng rng(15);
  VmfParams uniform{{0.0, 0.0, 1.0}, 0.0};
  for (int i = 0; i < 10; ++i) CHECK(vmf_log_density(random_unit(3, rng), uniform) == 0.0);

  VmfParams p{{0.0, 0.6, 0.8}, 3.0};
  const double at_mean = vmf_log_density(p.mean, p);
  for (int i = 0; i < 200; ++i) CHECK(vmf_log_density(random_unit(3, rng), p) <= at_mean);

  // Integral over the sphere against the normalized surface measure.
  VmfParams q{{0.0, 0.0, 1.0}, 2.0};
  const int nt = 400, np = 400;
  double total = 0.0;
  for (int i = 0; i < nt; ++i) {
    const double th = (i + 0.5) * std::numbers::pi / nt;
    for (int j = 0; j < np; ++j) {
      const double ph = (j + 0.5) * 2.0 * std::numbers::pi / np;
      const std::vector<double> z{std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
      total += std::exp(vmf_log_density(z, q)) * std::sin(th) * (std::numbers::pi / nt) *
               (2.0 * std::numbers::pi / np) / (4.0 * std::numbers::pi);
    }
  }
  CHECK(std::abs(total - 1.0) < 1e-3);

  try {
    (void)vmf_log_density(std::vector<double>{1.0, 1.0, 0.0}, q);
    FAIL("expected domain error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::domain);
  }
}

TEST_CASE("vmf_cosine_bin_probs matches the d = 3 closed form") {
  const double kappa = 4.0;
  const std::vector<double> edges{-1.0, -0.5, 0.0, 0.3, 0.9, 1.0};
  const auto probs = vmf_cosine_bin_probs(3, kappa, edges);
  const double z = std::exp(kappa) - std::exp(-kappa);
  for (std::size_t i = 0; i < probs.size(); ++i)
    CHECK(probs[i] == doctest::Approx((std::exp(kappa * edges[i + 1]) - std::exp(kappa * edges[i])) / z).epsilon(1e-9));
  const auto flat = vmf_cosine_bin_probs(2, 0.0, std::vector<double>{-1.0, 0.0, 1.0});
  CHECK(flat[0] == doctest::Approx(0.5));
}

TEST_CASE("Gaussian restricted to a thin shell is von Mises-Fisher") {
  Rng rng(61);
  const std::vector<double> mu{0.6, 0.0, 0.8};
  const double sigma = 0.5;
  const ShellSample s = sample_gaussian_shell(mu, sigma, 0.02, 100000, rng);
  CHECK(s.directions.rows() == 100000);
  CHECK(s.proposals > 100000);
  const VmfParams predicted{{0.6, 0.0, 0.8}, 1.0 / (sigma * sigma)};
  const GoodnessOfFit fit = vmf_cosine_chi_square(s.directions, predicted);
  CHECK(fit.p_value > 0.01);
  CHECK(fit.dof >= 10);
  // The test has power: a wrong concentration is rejected.
  const VmfParams wrong{{0.6, 0.0, 0.8}, 3.5};
  CHECK(vmf_cosine_chi_square(s.directions, wrong).p_value < 1e-6);
  CHECK_THROWS_AS(sample_gaussian_shell(std::vector<double>{0, 0, 0}, 0.5, 0.02, 1, rng), Error);
}
