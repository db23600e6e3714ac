#include "sf_policy.hpp"

#include <cmath>
#include <numbers>

namespace csf {

namespace {

constexpr Activation kPolicyAct = Activation::tanh;
constexpr Activation kSuccessorAct = Activation::relu;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

}  // namespace

ParamSet make_successor_net(std::size_t obs_dim, std::size_t action_dim, std::size_t skill_dim,
                            std::size_t out_dim, std::size_t hidden, std::size_t hidden_layers,
                            std::uint64_t seed) {
  return init_mlp("psi", {obs_dim + action_dim + skill_dim, hidden, out_dim, hidden_layers}, seed);
}

ParamSet make_policy_net(std::size_t obs_dim, std::size_t skill_dim, std::size_t action_dim,
                         std::size_t hidden, std::size_t hidden_layers, std::uint64_t seed) {
  return init_mlp("pi", {obs_dim + skill_dim, hidden, 2 * action_dim, hidden_layers}, seed);
}

Var successor_forward(Tape& tape, std::span<const Var> psi, Var obs, Var action, Var z) {
  return mlp(tape, psi, tape.concat_cols({obs, action, z}), kSuccessorAct);
}

Matrix successor_forward(const ParamSet& psi, const Matrix& obs, const Matrix& action, const Matrix& z) {
  return mlp_forward(psi, hconcat({&obs, &action, &z}), kSuccessorAct);
}

PolicySample policy_sample(Tape& tape, std::span<const Var> pi, Var obs, Var z, const Matrix& noise) {
  const Var out = mlp(tape, pi, tape.concat_cols({obs, z}), kPolicyAct);
  const std::size_t a_dim = tape.value(out).cols() / 2;
  require(noise.cols() == a_dim && noise.rows() == tape.value(out).rows(), ErrorCode::dimension,
          "policy noise has shape " + shape_string(noise));
  const Var mean = tape.slice_cols(out, 0, a_dim);
  const Var log_std = tape.clamp(tape.slice_cols(out, a_dim, 2 * a_dim), kLogStdMin, kLogStdMax);
  const Var u = tape.add(mean, tape.mul(tape.exp(log_std), tape.constant(noise)));

  Matrix base(noise.rows(), 1);
  for (std::size_t r = 0; r < noise.rows(); ++r)
    for (double e : noise.row(r)) base(r, 0) -= 0.5 * e * e + kHalfLog2Pi;
  // log pi(a) = log N(u; mean, std) + sum_k 2 log cosh(u_k)
  const Var log_prob =
      tape.add(tape.constant(std::move(base)), tape.row_sum(tape.sub(tape.scale(tape.log_cosh(u), 2.0), log_std)));
  return {tape.tanh(u), log_prob};
}

Matrix policy_noise(const ParamSet& pi, std::size_t rows, Rng& rng) {
  Matrix noise(rows, mlp_output_dim(pi) / 2);
  for (double& v : noise.values()) v = rng.normal();
  return noise;
}

Matrix policy_act(const ParamSet& pi, const Matrix& obs, const Matrix& z, Rng& rng, bool deterministic,
                  Matrix* log_prob) {
  const Matrix out = mlp_forward(pi, hconcat({&obs, &z}), kPolicyAct);
  const std::size_t a_dim = out.cols() / 2;
  Matrix act(out.rows(), a_dim);
  if (log_prob) *log_prob = Matrix(out.rows(), 1);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t k = 0; k < a_dim; ++k) {
      const double mean = out(r, k);
      if (deterministic) {
        act(r, k) = std::tanh(mean);
        continue;
      }
      const double log_std = std::clamp(out(r, a_dim + k), kLogStdMin, kLogStdMax);
      const double e = rng.normal();
      const double u = mean + std::exp(log_std) * e;
      act(r, k) = std::tanh(u);
      if (log_prob) (*log_prob)(r, 0) += -0.5 * e * e - kHalfLog2Pi - log_std + 2.0 * log_cosh(u);
    }
  return act;
}

// ---------------------------------------------------------------------------

Matrix sf_td_target(const ParamSet& psi_target, const Matrix& features, const Matrix& next_obs,
                    const Matrix& next_action, const Matrix& z, double gamma) {
  require(gamma >= 0.0 && gamma < 1.0, ErrorCode::config, "discount must lie in [0, 1)");
  Matrix target = successor_forward(psi_target, next_obs, next_action, z);
  require(target.same_shape(features), ErrorCode::dimension,
          "successor output " + shape_string(target) + " vs features " + shape_string(features));
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = features[i] + gamma * target[i];
  return target;
}

Var sf_td_loss(Tape& tape, std::span<const Var> psi, const Matrix& obs, const Matrix& action,
               const Matrix& z, const Matrix& target) {
  const Var pred = successor_forward(tape, psi, tape.constant(obs), tape.constant(action), tape.constant(z));
  return tape.mean(tape.row_sum(tape.square(tape.sub(pred, tape.constant(target)))));
}

Var actor_loss(Tape& tape, std::span<const Var> pi, const SuccessorFn& critic, const Matrix& obs,
               const Matrix& z, const Matrix& weights, const Matrix& noise, double alpha,
               ActorLossStats* stats) {
  const Var o = tape.constant(obs);
  const Var zz = tape.constant(z);
  const PolicySample s = policy_sample(tape, pi, o, zz, noise);
  const Var q = tape.row_sum(tape.mul(critic(tape, o, s.action, zz), tape.constant(weights)));
  const Var loss = tape.mean(tape.sub(tape.scale(s.log_prob, alpha), q));
  if (stats) {
    stats->loss = tape.value(loss).item();
    double lp = 0.0, qq = 0.0;
    for (double v : tape.value(s.log_prob).values()) lp += v;
    for (double v : tape.value(q).values()) qq += v;
    stats->mean_log_prob = lp / static_cast<double>(obs.rows());
    stats->mean_q = qq / static_cast<double>(obs.rows());
  }
  return loss;
}

SuccessorFn frozen_successor(const ParamSet& psi) {
  return [&psi](Tape& tape, Var obs, Var action, Var z) {
    const auto vars = tape.bind(psi, false);
    return successor_forward(tape, vars, obs, action, z);
  };
}

// ---------------------------------------------------------------------------

double EntropyTuner::alpha() const { return std::exp(log_alpha[0].item()); }

EntropyTuner make_entropy_tuner(double init_alpha, double target, AdamConfig adam) {
  require(init_alpha > 0.0, ErrorCode::config, "initial entropy coefficient must be positive");
  EntropyTuner t;
  t.log_alpha.add("log_alpha", Matrix::scalar(std::log(init_alpha)));
  t.adam = AdamState::for_params(t.log_alpha, adam);
  t.target = target;
  return t;
}

double entropy_coef_update(EntropyTuner& tuner, double mean_log_prob) {
  // d/d(log alpha) of -alpha (log pi + target)
  const double grad = -tuner.alpha() * (mean_log_prob + tuner.target);
  adam_step(tuner.log_alpha, {Matrix::scalar(grad)}, tuner.adam);
  return tuner.alpha();
}

void ema_update(const ParamSet& source, ParamSet& target, double tau) {
  require(source.size() == target.size(), ErrorCode::dimension, "EMA over mismatched parameter sets");
  require(tau >= 0.0 && tau <= 1.0, ErrorCode::invalid_argument, "EMA rate must lie in [0, 1]");
  for (std::size_t i = 0; i < source.size(); ++i) {
    require(source[i].same_shape(target[i]), ErrorCode::dimension, "EMA shape mismatch at " + source.name(i));
    Matrix& t = target[i];
    const Matrix& s = source[i];
    if (tau == 1.0) {
      t = s;
      continue;
    }
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = (1.0 - tau) * t[k] + tau * s[k];
  }
}

}  // namespace csf
