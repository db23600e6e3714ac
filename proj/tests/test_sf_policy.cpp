#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "sf_policy.hpp"

using namespace csf;

namespace {

Matrix randn(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

double max_abs_diff(const ChainFeatures& a, const ChainFeatures& b) {
  double e = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s)
    for (std::size_t k = 0; k < a[s].size(); ++k)
      for (std::size_t c = 0; c < a[s][k].size(); ++c) e = std::max(e, std::abs(a[s][k][c] - b[s][k][c]));
  return e;
}

}  // namespace

TEST_CASE("TD loss") {
  Rng rng(1);
  const ParamSet psi = make_successor_net(3, 2, 2, 2, 8, 2, 4);
  const Matrix obs = randn(6, 3, rng), act = randn(6, 2, rng), z = randn(6, 2, rng);

  SUBCASE("zero discount regression fixed point") {
    const Matrix features = successor_forward(psi, obs, act, z);
    const Matrix y = sf_td_target(psi, features, randn(6, 3, rng), randn(6, 2, rng), z, 0.0);
    CHECK(y == features);
    Tape tape;
    const auto vars = tape.bind(psi);
    CHECK(tape.value(sf_td_loss(tape, vars, obs, act, z, y)).item() == 0.0);
  }

  SUBCASE("finite differences") {
    ParamSet p = psi;
    const Matrix y = randn(6, 2, rng);
    const auto r = grad_check(p, [&](Tape& t, std::span<const Var> v) { return sf_td_loss(t, v, obs, act, z, y); },
                              1e-4);
    CHECK(r.passed);
  }

  SUBCASE("discount outside [0, 1)") {
    CHECK_THROWS_AS(sf_td_target(psi, Matrix(6, 2), obs, act, z, 1.0), Error);
  }
}

TEST_CASE("TD on the absorbing two-state chain reaches the geometric fixed point") {
  ChainSfProblem p;
  p.states = 2;
  p.gamma = 0.5;
  p.policy = {1, 1};
  p.features.assign(2, std::vector<std::vector<double>>(kChainActions, std::vector<double>(1, 0.0)));
  p.features[1][1][0] = 1.0;
  p.z = {1.0};
  ChainSfOptions o;
  o.updates = 5000;
  const ParamSet psi = train_chain_sf(p, 3, o);
  const auto learned = chain_successor_table(psi, p);
  const auto oracle = chain_sf_oracle(2, p.policy, p.features, 0.5);
  CHECK(oracle[1][1][0] == doctest::Approx(2.0));
  CHECK(std::abs(learned[1][1][0] - 2.0) < 0.05);
  CHECK(max_abs_diff(learned, oracle) < 0.05);
}

TEST_CASE("TD-trained successor features on the 5-state chain match dynamic programming") {
  const ChainSfProblem p = make_chain_sf_problem(5, 0.9, 11);
  const ParamSet psi = train_chain_sf(p, 11);
  const auto oracle = chain_sf_oracle(p.states, p.policy, p.features, p.gamma);
  CHECK(max_abs_diff(chain_successor_table(psi, p), oracle) < 0.05);

  // Untrained nets are far off.
  const ParamSet fresh = make_successor_net(5, 1, 2, 2, 64, 2, 11);
  CHECK(max_abs_diff(chain_successor_table(fresh, p), oracle) > 0.05);

  // psi . z equals Q from value iteration with the scalar reward dphi . z.
  std::vector<std::vector<double>> r(p.states, std::vector<double>(kChainActions));
  for (std::size_t s = 0; s < p.states; ++s)
    for (std::size_t a = 0; a < kChainActions; ++a)
      r[s][a] = p.features[s][a][0] * p.z[0] + p.features[s][a][1] * p.z[1];
  const auto q = chain_value_iteration(p.states, p.policy, r, p.gamma);
  for (std::size_t s = 0; s < p.states; ++s)
    for (std::size_t a = 0; a < kChainActions; ++a) {
      const double qz = oracle[s][a][0] * p.z[0] + oracle[s][a][1] * p.z[1];
      CHECK(std::abs(qz - q[s][a]) < 1e-9);
      // Scaling the skill scales Q, so greedy choices are unchanged.
      const double c = 3.7;
      const double q0 = oracle[s][0][0] * p.z[0] + oracle[s][0][1] * p.z[1];
      const double q1 = oracle[s][1][0] * p.z[0] + oracle[s][1][1] * p.z[1];
      CHECK((q0 < q1) == (c * q0 < c * q1));
    }
}

TEST_CASE("policy sampling") {
  Rng rng(2);
  SUBCASE("zero net acts with zero") {
    ParamSet pi = make_policy_net(4, 2, 2, 8, 2, 1);
    for (auto& m : pi.values()) m.fill(0.0);
    const Matrix a = policy_act(pi, randn(3, 4, rng), randn(3, 2, rng), rng, true);
    for (double v : a.values()) CHECK(v == 0.0);
  }

  SUBCASE("same seed, same action") {
    const ParamSet pi = make_policy_net(4, 2, 2, 8, 2, 1);
    const Matrix obs = randn(3, 4, rng), z = randn(3, 2, rng);
    Rng a(9), b(9);
    CHECK(policy_act(pi, obs, z, a, false) == policy_act(pi, obs, z, b, false));
  }

  SUBCASE("tape and tape-free paths agree") {
    const ParamSet pi = make_policy_net(4, 2, 2, 8, 2, 1);
    const Matrix obs = randn(5, 4, rng), z = randn(5, 2, rng);
    Rng a(13), b(13);
    Matrix lp;
    const Matrix act = policy_act(pi, obs, z, a, false, &lp);
    const Matrix noise = policy_noise(pi, 5, b);
    Tape tape;
    const auto vars = tape.bind(pi);
    const PolicySample s = policy_sample(tape, vars, tape.constant(obs), tape.constant(z), noise);
    for (std::size_t i = 0; i < act.size(); ++i) CHECK(tape.value(s.action)[i] == doctest::Approx(act[i]).epsilon(1e-14));
    for (std::size_t i = 0; i < lp.size(); ++i) CHECK(tape.value(s.log_prob)[i] == doctest::Approx(lp[i]).epsilon(1e-12));
  }

  SUBCASE("log-prob matches the numerical density of the squashed Gaussian") {
    // One action dim; the last layer's bias sets (mean, log std) exactly.
    ParamSet pi = make_policy_net(1, 1, 1, 4, 2, 1);
    for (auto& m : pi.values()) m.fill(0.0);
    const double mu = 0.4, log_std = -0.3, sd = std::exp(log_std);
    pi.at("pi.l2.b") = Matrix::from_rows({{mu, log_std}});
    auto cdf = [&](double t) { return 0.5 * std::erfc(-(std::atanh(t) - mu) / (sd * std::numbers::sqrt2)); };
    for (int i = 0; i < 50; ++i) {
      Matrix lp;
      const Matrix a = policy_act(pi, Matrix(1, 1), Matrix(1, 1), rng, false, &lp);
      const double t = a(0, 0);
      if (std::abs(t) > 0.999) continue;
      const double h = 1e-6;
      const double numeric = (cdf(t + h) - cdf(t - h)) / (2 * h);
      CHECK(std::exp(lp(0, 0)) == doctest::Approx(numeric).epsilon(1e-5));
    }
  }
}

TEST_CASE("actor loss") {
  Rng rng(3);
  SUBCASE("critic blind to the action gives no gradient") {
    ParamSet pi = make_policy_net(3, 2, 2, 8, 2, 5);
    const SuccessorFn blind = [](Tape& t, Var obs, Var, Var) { return t.slice_cols(obs, 0, 2); };
    Tape tape;
    const auto vars = tape.bind(pi);
    tape.backward(actor_loss(tape, vars, blind, randn(8, 3, rng), randn(8, 2, rng), randn(8, 2, rng),
                             randn(8, 2, rng), 0.0));
    for (const auto& g : tape.gradients(vars))
      for (double v : g.values()) CHECK(v == 0.0);
  }

  SUBCASE("finite differences through the reparameterized sampler") {
    ParamSet pi = make_policy_net(3, 2, 2, 8, 2, 5);
    const ParamSet psi = make_successor_net(3, 2, 2, 2, 8, 2, 6);
    const Matrix obs = randn(8, 3, rng), z = randn(8, 2, rng), noise = randn(8, 2, rng);
    const auto critic = frozen_successor(psi);
    const auto r = grad_check(pi, [&](Tape& t, std::span<const Var> v) {
      return actor_loss(t, v, critic, obs, z, z, noise, 0.3);
    }, 1e-3);
    CHECK(r.passed);
  }

  SUBCASE("quadratic toy converges to the analytic argmax") {
    ParamSet pi = make_policy_net(1, 1, 1, 16, 2, 7);
    AdamState adam = AdamState::for_params(pi, {1e-2});
    const SuccessorFn quad = [](Tape& t, Var, Var a, Var) { return t.scale(t.square(t.add_scalar(a, -0.5)), -1.0); };
    const Matrix obs(32, 1, 1.0), z(32, 1, 1.0), w(32, 1, 1.0);
    for (int it = 0; it < 2000; ++it) {
      Tape tape;
      const auto vars = tape.bind(pi);
      tape.backward(actor_loss(tape, vars, quad, obs, z, w, policy_noise(pi, 32, rng), 0.0));
      adam_step(pi, tape.gradients(vars), adam);
    }
    const Matrix a = policy_act(pi, Matrix(1, 1, 1.0), Matrix(1, 1, 1.0), rng, true);
    CHECK(std::abs(a(0, 0) - 0.5) < 0.05);
  }
}

TEST_CASE("entropy coefficient") {
  SUBCASE("at target, no move") {
    EntropyTuner t = make_entropy_tuner(0.1, -2.0);
    CHECK(entropy_coef_update(t, 2.0) == doctest::Approx(0.1).epsilon(1e-15));
  }
  SUBCASE("entropy too low raises alpha") {
    EntropyTuner t = make_entropy_tuner(0.1, -2.0);
    CHECK(entropy_coef_update(t, 5.0) > 0.1);
    EntropyTuner u = make_entropy_tuner(0.1, -2.0);
    CHECK(entropy_coef_update(u, -10.0) < 0.1);
  }
  SUBCASE("two small steps match one double step to first order") {
    const double lr = 1e-3;
    EntropyTuner two = make_entropy_tuner(0.2, -2.0, {lr});
    entropy_coef_update(two, 1.0);
    entropy_coef_update(two, 1.0);
    EntropyTuner one = make_entropy_tuner(0.2, -2.0, {2 * lr});
    entropy_coef_update(one, 1.0);
    CHECK(std::abs(two.log_alpha[0].item() - one.log_alpha[0].item()) < 10 * lr * lr);
  }
  CHECK_THROWS_AS(make_entropy_tuner(0.0, -1.0), Error);
}

TEST_CASE("EMA target") {
  Rng rng(4);
  const ParamSet psi = make_successor_net(2, 1, 1, 1, 4, 2, 1);
  ParamSet target = make_successor_net(2, 1, 1, 1, 4, 2, 2);
  const ParamSet before = target;
  ema_update(psi, target, 0.0);
  CHECK(target == before);
  ParamSet copy = target;
  ema_update(psi, copy, 1.0);
  CHECK(copy == psi);

  auto dist = [&](const ParamSet& a) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t k = 0; k < a[i].size(); ++k) s += std::pow(a[i][k] - psi[i][k], 2);
    return std::sqrt(s);
  };
  double prev = dist(target);
  for (int i = 0; i < 10; ++i) {
    ema_update(psi, target, 5e-3);
    const double now = dist(target);
    CHECK(now == doctest::Approx(prev * (1 - 5e-3)).epsilon(1e-9));
    prev = now;
  }
}
