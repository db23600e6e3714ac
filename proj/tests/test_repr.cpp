#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "hypersphere.hpp"
#include "repr.hpp"

using namespace csf;

namespace {

// phi(x) = x on R^2.
ReprNet identity_net(CriticKind critic = CriticKind::inner_product) {
  ReprNet net = make_repr_net(critic, 2, 2, 0, 0, 1);
  net.params[0] = Matrix::from_rows({{1, 0}, {0, 1}});
  net.params[1].fill(0.0);
  return net;
}

ReprBatch random_batch(std::size_t n, std::size_t obs_dim, std::size_t d, Rng& rng) {
  ReprBatch b{Matrix(n, obs_dim), Matrix(n, obs_dim), sample_skills(SkillMode::continuous, d, n, rng)};
  for (double& v : b.obs.values()) v = rng.normal();
  for (double& v : b.next_obs.values()) v = rng.normal();
  return b;
}

double loss_value(const ReprNet& net, const ReprBatch& b, const Matrix& neg, double xi, bool in_batch) {
  Tape tape;
  const auto vars = tape.bind(net.params);
  return tape.value(csf_repr_loss(tape, net, vars, b, neg, xi, in_batch)).item();
}

// Draws from vMF(mean, kappa) on the circle by rejection from the uniform.
Matrix sample_vmf_circle(double mean_angle, double kappa, std::size_t n, Rng& rng) {
  Matrix out(n, 2);
  for (std::size_t i = 0; i < n;) {
    const double t = rng.uniform(-std::numbers::pi, std::numbers::pi);
    if (rng.uniform() < std::exp(kappa * (std::cos(t) - 1.0))) {
      out(i, 0) = std::cos(t + mean_angle);
      out(i, 1) = std::sin(t + mean_angle);
      ++i;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("critic score examples") {
  const std::vector<double> origin{0, 0}, e1{1, 0}, p34{3, 4};
  CHECK(critic_score(identity_net(), origin, e1, e1) == 1.0);
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    const auto z = sample_uniform_sphere(2, rng).values;
    CHECK(critic_score(identity_net(), p34, p34, z) == 0.0);
  }
  CHECK(critic_score(identity_net(CriticKind::gaussian_kernel), origin, p34, e1) == -12.5);
  CHECK(critic_score(identity_net(CriticKind::laplacian_kernel), origin, p34, e1) == -7.0);
  CHECK_THROWS_AS(critic_score(identity_net(), origin, e1, std::vector<double>{1, 0, 0}), Error);
}

TEST_CASE("critic is linear in the skill") {
  Rng rng(5);
  for (auto kind : {CriticKind::inner_product, CriticKind::monolithic_mlp}) {
    const ReprNet net = make_repr_net(kind, 4, 3, 16, 2, 9);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> s(4), sp(4), z1(3), z2(3), mix(3);
      for (auto* v : {&s, &sp, &z1, &z2})
        for (double& x : *v) x = rng.normal();
      const double a = rng.normal(), b = rng.normal();
      for (int k = 0; k < 3; ++k) mix[k] = a * z1[k] + b * z2[k];
      const double lhs = critic_score(net, s, sp, mix);
      const double rhs = a * critic_score(net, s, sp, z1) + b * critic_score(net, s, sp, z2);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
}

TEST_CASE("contrastive loss examples") {
  Rng rng(6);
  ReprNet zero = make_repr_net(CriticKind::inner_product, 3, 2, 8, 2, 1);
  for (auto& m : zero.params.values()) m.fill(0.0);
  const ReprBatch b = random_batch(16, 3, 2, rng);
  const Matrix neg = sample_skills(SkillMode::continuous, 2, 256, rng);
  CHECK(std::abs(loss_value(zero, b, neg, 5.0, false)) < 1e-15);
  CHECK(std::abs(loss_value(zero, b, neg, 5.0, true)) < 1e-12);

  SUBCASE("negative term estimates the log-partition") {
    // Two identical rows with dphi = z = e1; exact value log I0(1).
    const ReprNet net = identity_net();
    ReprBatch one{Matrix::from_rows({{0, 0}, {0, 0}}), Matrix::from_rows({{1, 0}, {1, 0}}),
                  Matrix::from_rows({{1, 0}, {1, 0}})};
    const std::size_t m = 200000;
    const Matrix many = sample_skills(SkillMode::continuous, 2, m, rng);
    Tape tape;
    const auto vars = tape.bind(net.params);
    ReprLossStats st;
    csf_repr_loss(tape, net, vars, one, many, 5.0, false, &st);
    CHECK(st.positive == 1.0);
    const double exact = std::log(std::cyl_bessel_i(0.0, 1.0));
    // Standard error of the log-mean of exp(z_1), z uniform on the circle.
    const double var = std::cyl_bessel_i(0.0, 2.0) - std::pow(std::cyl_bessel_i(0.0, 1.0), 2);
    const double se = std::sqrt(var / m) / std::cyl_bessel_i(0.0, 1.0);
    CHECK(std::abs(st.negative - exact) < 3 * se);
    CHECK(st.loss == doctest::Approx(-1.0 + 5.0 * st.negative).epsilon(1e-12));
  }

  SUBCASE("too few negatives") {
    CHECK_THROWS_AS(loss_value(zero, b, Matrix(1, 2), 5.0, false), Error);
  }
}

TEST_CASE("representation losses pass finite-difference checks") {
  Rng rng(7);
  for (auto kind : {CriticKind::inner_product, CriticKind::monolithic_mlp, CriticKind::gaussian_kernel,
                    CriticKind::laplacian_kernel}) {
    CAPTURE(critic_kind_name(kind));
    ReprNet net = make_repr_net(kind, 3, 2, 6, 2, 100 + static_cast<int>(kind));
    net.act = Activation::tanh;
    const ReprBatch b = random_batch(8, 3, 2, rng);
    const Matrix neg = sample_skills(SkillMode::continuous, 2, 32, rng);
    for (bool in_batch : {false, true}) {
      const auto r = grad_check(net.params, [&](Tape& t, std::span<const Var> v) {
        return csf_repr_loss(t, net, v, b, neg, 5.0, in_batch);
      }, 1e-4);
      CHECK(r.passed);
    }
    const auto r = grad_check(net.params, [&](Tape& t, std::span<const Var> v) {
      return metra_repr_loss(t, net, v, b, 2.5);
    }, 1e-4);
    CHECK(r.passed);
  }
}

TEST_CASE("loss is invariant to a constant shift of phi") {
  Rng rng(8);
  ReprNet net = make_repr_net(CriticKind::inner_product, 4, 3, 16, 2, 3);
  const ReprBatch b = random_batch(32, 4, 3, rng);
  const Matrix neg = sample_skills(SkillMode::continuous, 3, 64, rng);
  const double before = loss_value(net, b, neg, 5.0, false);
  Matrix& bias = net.params.at("phi.l2.b");
  for (double& v : bias.values()) v += rng.normal() * 3.0;
  CHECK(std::abs(loss_value(net, b, neg, 5.0, false) - before) < 1e-9);
}

TEST_CASE("dual variable updates") {
  DualVariable dual;
  CHECK(dual_update(dual, 1.0 + dual.slack) == 30.0);
  const double before = dual.lambda;
  dual_update(dual, 0.0);
  CHECK(dual.lambda == doctest::Approx(before - dual.lr * (1 + dual.slack)).epsilon(1e-15));
  dual_update(dual, 5.0);
  CHECK(dual.lambda > before - dual.lr * (1 + dual.slack));
  DualVariable small{1e-6, 1.0, 1e-3};
  CHECK(dual_update(small, 0.0) == 0.0);
}

TEST_CASE("intrinsic reward examples") {
  Rng rng(9);
  const Matrix neg = sample_skills(SkillMode::continuous, 2, 256, rng);
  const ReprNet net = identity_net();
  const Matrix s = Matrix::from_rows({{0, 0}}), sp = Matrix::from_rows({{0.6, 0.8}});
  CHECK(intrinsic_reward(net, s, sp, sp, RewardMode::csf, neg)[0] == doctest::Approx(1.0).epsilon(1e-15));
  for (int i = 0; i < 5; ++i) {
    const Matrix z = sample_skills(SkillMode::continuous, 2, 1, rng);
    CHECK(intrinsic_reward(net, sp, sp, z, RewardMode::csf, neg)[0] == 0.0);
    CHECK(intrinsic_reward(net, sp, sp, z, RewardMode::mi_only, neg)[0] == 0.0);
  }
  // mi_only subtracts the sample log-mean-exp over the negatives.
  const double lme = [&] {
    double acc = 0;
    for (std::size_t j = 0; j < neg.rows(); ++j) acc += std::exp(0.6 * neg(j, 0) + 0.8 * neg(j, 1));
    return std::log(acc / neg.rows());
  }();
  CHECK(intrinsic_reward(net, s, sp, sp, RewardMode::mi_only, neg)[0] == doctest::Approx(1.0 - lme).epsilon(1e-12));

  // Feature/weight factorization reproduces the reward.
  const Matrix f = reward_features(net, delta_phi(net, s, sp), RewardMode::mi_only, neg);
  const Matrix w = reward_weights(net, RewardMode::mi_only, sp);
  REQUIRE(f.cols() == 3);
  CHECK(w(0, 2) == 1.0);
  CHECK(reward_weights(net, RewardMode::mi_only, sp, 5.0)(0, 2) == 5.0);
  CHECK(intrinsic_reward(net, s, sp, sp, RewardMode::mi_only, neg, 5.0)[0] ==
        doctest::Approx(1.0 - 5.0 * lme).epsilon(1e-12));

  const ReprNet kernel = identity_net(CriticKind::gaussian_kernel);
  CHECK(reward_feature_dim(kernel, RewardMode::csf) == 1);
  CHECK(intrinsic_reward(kernel, s, Matrix::from_rows({{3, 4}}), sp, RewardMode::csf, neg)[0] == -12.5);
}

TEST_CASE("entropy diagnostic") {
  Rng rng(10);
  SUBCASE("identical directions minimize the estimate") {
    Matrix same(200, 2);
    for (std::size_t i = 0; i < 200; ++i) same(i, 0) = 1.0;
    const double h0 = entropy_diagnostic(same).entropy;
    for (int t = 0; t < 10; ++t) {
      Matrix p = same;
      for (std::size_t i = 0; i < p.rows(); ++i) {
        const double a = rng.normal() * 0.3;
        p(i, 0) = std::cos(a);
        p(i, 1) = std::sin(a);
      }
      CHECK(entropy_diagnostic(p).entropy > h0);
    }
  }

  SUBCASE("uniform directions beat concentrated ones") {
    const Matrix uni = sample_skills(SkillMode::continuous, 2, 1000, rng);
    const Matrix peaked = sample_vmf_circle(0.7, 8.0, 1000, rng);
    CHECK(entropy_diagnostic(uni).entropy > entropy_diagnostic(peaked).entropy);
    // Unit rows: correction is log I0(1) exactly.
    CHECK(entropy_diagnostic(uni).log_partition_mean == doctest::Approx(std::log(std::cyl_bessel_i(0.0, 1.0))));
  }

  SUBCASE("stable under batch doubling") {
    const double a = entropy_diagnostic(sample_skills(SkillMode::continuous, 2, 1000, rng)).entropy;
    const double b = entropy_diagnostic(sample_skills(SkillMode::continuous, 2, 2000, rng)).entropy;
    CHECK(std::abs(a - b) < 0.05);
  }

  SUBCASE("bad input") {
    CHECK_THROWS_AS(entropy_diagnostic(Matrix(1, 2, 1.0)), Error);
    CHECK_THROWS_AS(entropy_diagnostic(Matrix(5, 2, 0.0)), Error);
  }
}

namespace {

// Per-edge mean skill direction, with leftward steps folded onto rightward
// ones (dphi of a leftward step is minus that of the rightward step).
std::vector<double> edge_mean_norms(const ReprBatch& data, std::size_t nodes) {
  std::vector<double> sx(nodes - 1, 0.0), sy(nodes - 1, 0.0), cnt(nodes - 1, 0.0);
  for (std::size_t i = 0; i < data.obs.rows(); ++i) {
    std::size_t from = 0, to = 0;
    for (std::size_t c = 0; c < nodes; ++c) {
      if (data.obs(i, c) == 1.0) from = c;
      if (data.next_obs(i, c) == 1.0) to = c;
    }
    const std::size_t e = std::min(from, to);
    const double sign = to > from ? 1.0 : -1.0;
    sx[e] += sign * data.z(i, 0);
    sy[e] += sign * data.z(i, 1);
    cnt[e] += 1.0;
  }
  std::vector<double> out;
  for (std::size_t e = 0; e + 1 < nodes; ++e) out.push_back(std::hypot(sx[e], sy[e]) / cnt[e]);
  return out;
}

// Root of xi I1(r)/I0(r) = c by bisection.
double csf_edge_norm(double xi, double c) {
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (xi * std::cyl_bessel_i(1.0, mid) / std::cyl_bessel_i(0.0, mid) < c ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("line graph: dual objective meets the constraint, contrastive matches its closed form") {
  const std::size_t nodes = 9;
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    const ReprBatch data = make_line_graph_data(nodes, 16, rng);
    const auto means = edge_mean_norms(data, nodes);

    const LineGraphFit metra = fit_line_graph(ReprObjective::metra_dual, data, seed);
    CHECK(metra.e_sq_norm > 0.9);
    CHECK(metra.e_sq_norm < 1.1);
    // At the optimum dphi_e is proportional to the edge mean, scaled so that
    // E|dphi|^2 = 1; the positive score is then sqrt(mean_e |m_e|^2).
    double sq = 0.0;
    for (double m : means) sq += m * m;
    const double metra_pos = std::sqrt(sq / means.size());
    CHECK(metra.positive == doctest::Approx(metra_pos * std::sqrt(metra.e_sq_norm)).epsilon(0.03));

    const LineGraphFit csf = fit_line_graph(ReprObjective::csf, data, seed);
    double oracle_sq = 0.0;
    for (double m : means) oracle_sq += std::pow(csf_edge_norm(5.0, m), 2);
    oracle_sq /= means.size();
    CHECK(csf.e_sq_norm == doctest::Approx(oracle_sq).epsilon(0.05));

    // Both point every edge along its mean skill: the scale-free alignment
    // E[dphi . z] / sqrt(E|dphi|^2) agrees.
    const double align_metra = metra.positive / std::sqrt(metra.e_sq_norm);
    const double align_csf = csf.positive / std::sqrt(csf.e_sq_norm);
    CHECK(std::abs(align_csf - align_metra) < 0.15 * align_metra);
  }
}
