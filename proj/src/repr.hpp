#pragma once

// State representation phi and the objectives that train it: the
// contrastive loss with a scaled log-sum-exp over negative skills, the
// dual-gradient-descent baseline with an expected squared-norm constraint,
// and the intrinsic reward computed from the current phi.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"

namespace csf {

enum class ReprObjective { csf, metra_dual };
enum class CriticKind { inner_product, monolithic_mlp, gaussian_kernel, laplacian_kernel };
enum class RewardMode { csf, mi_only };

ReprObjective parse_repr_objective(const std::string& s);
CriticKind parse_critic_kind(const std::string& s);
RewardMode parse_reward_mode(const std::string& s);
std::string repr_objective_name(ReprObjective v);
std::string critic_kind_name(CriticKind v);
std::string reward_mode_name(RewardMode v);

/// phi: obs -> R^d. In monolithic mode the network instead maps the
/// concatenated pair [s, s'] to R^d and plays the role of phi(s') - phi(s).
struct ReprNet {
  CriticKind critic = CriticKind::inner_product;
  std::size_t d = 2;
  std::size_t obs_dim = 0;
  Activation act = Activation::relu;
  ParamSet params;
};

ReprNet make_repr_net(CriticKind critic, std::size_t obs_dim, std::size_t d, std::size_t hidden,
                      std::size_t hidden_layers, std::uint64_t seed);

/// Whether the critic depends on the skill at all. The two kernel critics
/// score a transition by the size of its representation step alone.
bool critic_uses_skill(CriticKind critic);

/// Transition embedding on the tape, N x d: phi(s') - phi(s), or the joint
/// network's output in monolithic mode.
Var delta_phi(Tape& tape, const ReprNet& net, std::span<const Var> params, Var obs, Var next_obs);
/// Tape-free version.
Matrix delta_phi(const ReprNet& net, const Matrix& obs, const Matrix& next_obs);

/// f(s, s', z) for each row, N x 1.
Var positive_scores(Tape& tape, CriticKind critic, Var dphi, Var z);
/// f(s_i, s'_i, z'_j), N x m, for skills stacked as rows of `skills`.
Var pairwise_scores(Tape& tape, CriticKind critic, Var dphi, const Matrix& skills);

/// Single-transition critic value.
double critic_score(const ReprNet& net, std::span<const double> obs, std::span<const double> next_obs,
                    std::span<const double> z);

struct ReprBatch {
  Matrix obs;       // N x obs_dim, normalized
  Matrix next_obs;  // N x obs_dim, normalized
  Matrix z;         // N x d
};

struct ReprLossStats {
  double loss = 0.0;
  double positive = 0.0;      // E[f(s, s', z)]
  double negative = 0.0;      // E[logsumexp_j f(s, s', z'_j) - log m]
  double e_sq_norm = 0.0;     // E |dphi|^2
};

/// -E[f(s,s',z)] + xi E[logsumexp_j f(s,s',z'_j) - log m]. With `in_batch`
/// the other rows' skills are the negatives (m = N - 1, own skill masked out)
/// and `negatives` is ignored.
Var csf_repr_loss(Tape& tape, const ReprNet& net, std::span<const Var> params, const ReprBatch& batch,
                  const Matrix& negatives, double xi, bool in_batch = false,
                  ReprLossStats* stats = nullptr);

struct DualVariable {
  double lambda = 30.0;
  double lr = 1e-4;
  double slack = 1e-3;
};

/// -(E[f(s,s',z)] + lambda (1 - E|dphi|^2)); lambda is held constant here.
Var metra_repr_loss(Tape& tape, const ReprNet& net, std::span<const Var> params, const ReprBatch& batch,
                    double lambda, ReprLossStats* stats = nullptr);

/// lambda <- max(0, lambda - lr (1 + slack - E|dphi|^2)). Returns the new value.
double dual_update(DualVariable& dual, double e_sq_norm);

// ---------------------------------------------------------------------------
// Rewards as a linear function of per-transition features. The successor
// critic learns the discounted sum of `reward_features`; the reward is their
// dot product with `reward_weights`.

std::size_t reward_feature_dim(const ReprNet& net, RewardMode mode);

/// csf: dphi (or the kernel score). mi_only appends the column
/// -(logsumexp_j f(s,s',z'_j) - log m) over the supplied negatives.
Matrix reward_features(const ReprNet& net, const Matrix& dphi, RewardMode mode, const Matrix& negatives);
/// z (or 1 for kernel critics), with a trailing `anti_weight` in mi_only mode.
Matrix reward_weights(const ReprNet& net, RewardMode mode, const Matrix& z, double anti_weight = 1.0);

std::vector<double> intrinsic_reward(const ReprNet& net, const Matrix& obs, const Matrix& next_obs,
                                     const Matrix& z, RewardMode mode, const Matrix& negatives,
                                     double anti_weight = 1.0);

// ---------------------------------------------------------------------------

struct EntropyEstimate {
  /// -(1/N) sum_i log p_hat(u_i), with p_hat a von Mises-Fisher kernel
  /// density over the batch directions u_j = dphi_j / |dphi_j|, kernel
  /// concentration |dphi_i|, densities taken relative to the uniform measure.
  double entropy = 0.0;
  /// (1/N) sum_i log E_z[exp(dphi_i . z)]; the normalizer correction.
  double log_partition_mean = 0.0;
};

/// Needs N >= 2 rows, d >= 2 and no zero rows.
EntropyEstimate entropy_diagnostic(const Matrix& dphi);

}  // namespace csf
