#pragma once

// Successor-feature critic psi(s, a, z), its EMA target, and the
// skill-conditioned tanh-Gaussian actor with a learned entropy coefficient.

#include <cstdint>
#include <functional>
#include <span>

#include "autodiff.hpp"
#include "rng.hpp"

namespace csf {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// psi: [s, a, z] -> R^k, named "psi.*".
ParamSet make_successor_net(std::size_t obs_dim, std::size_t action_dim, std::size_t skill_dim,
                            std::size_t out_dim, std::size_t hidden, std::size_t hidden_layers,
                            std::uint64_t seed);

/// pi: [s, z] -> (mean, log-std), named "pi.*"; output width 2 * action_dim.
ParamSet make_policy_net(std::size_t obs_dim, std::size_t skill_dim, std::size_t action_dim,
                         std::size_t hidden, std::size_t hidden_layers, std::uint64_t seed);

Var successor_forward(Tape& tape, std::span<const Var> psi, Var obs, Var action, Var z);
Matrix successor_forward(const ParamSet& psi, const Matrix& obs, const Matrix& action, const Matrix& z);

struct PolicySample {
  Var action;    // N x A, tanh(u)
  Var log_prob;  // N x 1
};

/// Reparameterized draw u = mean + std * noise, a = tanh(u), with the exact
/// change-of-variables log density.
PolicySample policy_sample(Tape& tape, std::span<const Var> pi, Var obs, Var z, const Matrix& noise);

/// Tape-free actions: tanh(mean) if deterministic, else a fresh draw.
Matrix policy_act(const ParamSet& pi, const Matrix& obs, const Matrix& z, Rng& rng, bool deterministic,
                  Matrix* log_prob = nullptr);

/// Standard-normal noise of the policy's action shape.
Matrix policy_noise(const ParamSet& pi, std::size_t rows, Rng& rng);

// ---------------------------------------------------------------------------

/// features + gamma * psi_target(s', a', z).
Matrix sf_td_target(const ParamSet& psi_target, const Matrix& features, const Matrix& next_obs,
                    const Matrix& next_action, const Matrix& z, double gamma);

/// mean_i sum_k (psi(s_i, a_i, z_i)_k - target_ik)^2
Var sf_td_loss(Tape& tape, std::span<const Var> psi, const Matrix& obs, const Matrix& action,
               const Matrix& z, const Matrix& target);

/// Values of the critic for given (s, a, z); must return N x k.
using SuccessorFn = std::function<Var(Tape&, Var obs, Var action, Var z)>;

struct ActorLossStats {
  double loss = 0.0;
  double mean_log_prob = 0.0;
  double mean_q = 0.0;
};

/// E[alpha log pi(a|s,z) - psi(s,a,z) . w], a reparameterized from `noise`.
/// `weights` is N x k (the skill, or the reward weights derived from it).
Var actor_loss(Tape& tape, std::span<const Var> pi, const SuccessorFn& critic, const Matrix& obs,
               const Matrix& z, const Matrix& weights, const Matrix& noise, double alpha,
               ActorLossStats* stats = nullptr);

/// Critic bound to fixed parameters: gradients reach the action only.
SuccessorFn frozen_successor(const ParamSet& psi);

// ---------------------------------------------------------------------------

struct EntropyTuner {
  ParamSet log_alpha;  // single 1x1 entry "log_alpha"
  AdamState adam;
  double target = 0.0;

  double alpha() const;
};

/// target = -action_dim by default.
EntropyTuner make_entropy_tuner(double init_alpha, double target, AdamConfig adam = {});

/// One optimizer step on E[-alpha (log pi + target)] with respect to log alpha.
/// Returns the new alpha.
double entropy_coef_update(EntropyTuner& tuner, double mean_log_prob);

/// target <- (1 - tau) target + tau source, entrywise.
void ema_update(const ParamSet& source, ParamSet& target, double tau);

}  // namespace csf
