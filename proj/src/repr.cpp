#include "repr.hpp"

#include <algorithm>
#include <cmath>

#include "hypersphere.hpp"

namespace csf {

ReprObjective parse_repr_objective(const std::string& s) {
  if (s == "csf") return ReprObjective::csf;
  if (s == "metra_dual") return ReprObjective::metra_dual;
  fail(ErrorCode::config, "unknown repr.objective '" + s + "'");
}

CriticKind parse_critic_kind(const std::string& s) {
  if (s == "inner_product") return CriticKind::inner_product;
  if (s == "monolithic_mlp") return CriticKind::monolithic_mlp;
  if (s == "gaussian_kernel") return CriticKind::gaussian_kernel;
  if (s == "laplacian_kernel") return CriticKind::laplacian_kernel;
  fail(ErrorCode::config, "unknown repr.critic '" + s + "'");
}

RewardMode parse_reward_mode(const std::string& s) {
  if (s == "csf") return RewardMode::csf;
  if (s == "mi_only") return RewardMode::mi_only;
  fail(ErrorCode::config, "unknown reward.mode '" + s + "'");
}

std::string repr_objective_name(ReprObjective v) {
  return v == ReprObjective::csf ? "csf" : "metra_dual";
}

std::string critic_kind_name(CriticKind v) {
  switch (v) {
    case CriticKind::inner_product: return "inner_product";
    case CriticKind::monolithic_mlp: return "monolithic_mlp";
    case CriticKind::gaussian_kernel: return "gaussian_kernel";
    case CriticKind::laplacian_kernel: return "laplacian_kernel";
  }
  return "?";
}

std::string reward_mode_name(RewardMode v) { return v == RewardMode::csf ? "csf" : "mi_only"; }

ReprNet make_repr_net(CriticKind critic, std::size_t obs_dim, std::size_t d, std::size_t hidden,
                      std::size_t hidden_layers, std::uint64_t seed) {
  require(d >= 1 && obs_dim >= 1, ErrorCode::config, "representation needs positive dimensions");
  ReprNet net;
  net.critic = critic;
  net.d = d;
  net.obs_dim = obs_dim;
  const std::size_t in = critic == CriticKind::monolithic_mlp ? 2 * obs_dim : obs_dim;
  net.params = init_mlp("phi", {in, hidden, d, hidden_layers}, seed);
  return net;
}

bool critic_uses_skill(CriticKind critic) {
  return critic == CriticKind::inner_product || critic == CriticKind::monolithic_mlp;
}

Var delta_phi(Tape& tape, const ReprNet& net, std::span<const Var> params, Var obs, Var next_obs) {
  if (net.critic == CriticKind::monolithic_mlp)
    return mlp(tape, params, tape.concat_cols({obs, next_obs}), net.act);
  return tape.sub(mlp(tape, params, next_obs, net.act), mlp(tape, params, obs, net.act));
}

Matrix delta_phi(const ReprNet& net, const Matrix& obs, const Matrix& next_obs) {
  require(obs.same_shape(next_obs), ErrorCode::dimension, "obs and next_obs differ in shape");
  if (net.critic == CriticKind::monolithic_mlp)
    return mlp_forward(net.params, hconcat({&obs, &next_obs}), net.act);
  Matrix a = mlp_forward(net.params, next_obs, net.act);
  const Matrix b = mlp_forward(net.params, obs, net.act);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

namespace {

Var kernel_score(Tape& tape, CriticKind critic, Var dphi) {
  if (critic == CriticKind::gaussian_kernel) return tape.scale(tape.row_sum(tape.square(dphi)), -0.5);
  return tape.scale(tape.row_sum(tape.abs(dphi)), -1.0);
}

}  // namespace

Var positive_scores(Tape& tape, CriticKind critic, Var dphi, Var z) {
  if (!critic_uses_skill(critic)) return kernel_score(tape, critic, dphi);
  require(tape.value(dphi).same_shape(tape.value(z)), ErrorCode::config,
          "critic expects skills shaped like the representation, got " + shape_string(tape.value(z)) +
              " vs " + shape_string(tape.value(dphi)));
  return tape.row_sum(tape.mul(dphi, z));
}

Var pairwise_scores(Tape& tape, CriticKind critic, Var dphi, const Matrix& skills) {
  if (!critic_uses_skill(critic)) return tape.broadcast_cols(kernel_score(tape, critic, dphi), skills.rows());
  require(skills.cols() == tape.value(dphi).cols(), ErrorCode::config,
          "negative skills have dimension " + std::to_string(skills.cols()) + ", representation " +
              std::to_string(tape.value(dphi).cols()));
  return tape.matmul(dphi, tape.constant(transpose(skills)));
}

double critic_score(const ReprNet& net, std::span<const double> obs, std::span<const double> next_obs,
                    std::span<const double> z) {
  const Matrix dphi = delta_phi(net, Matrix::row_vector(obs), Matrix::row_vector(next_obs));
  Tape tape;
  const Var d = tape.constant(dphi);
  if (critic_uses_skill(net.critic)) {
    require(z.size() == net.d, ErrorCode::config, "skill dimension does not match the representation");
    return tape.value(positive_scores(tape, net.critic, d, tape.constant(Matrix::row_vector(z)))).item();
  }
  return tape.value(positive_scores(tape, net.critic, d, d)).item();
}

namespace {

void fill_common_stats(Tape& tape, Var dphi, Var positive, ReprLossStats* stats) {
  if (!stats) return;
  const Matrix& d = tape.value(dphi);
  const Matrix& p = tape.value(positive);
  double sq = 0.0;
  for (double v : d.values()) sq += v * v;
  double pos = 0.0;
  for (double v : p.values()) pos += v;
  stats->e_sq_norm = sq / static_cast<double>(d.rows());
  stats->positive = pos / static_cast<double>(p.rows());
}

}  // namespace

Var csf_repr_loss(Tape& tape, const ReprNet& net, std::span<const Var> params, const ReprBatch& batch,
                  const Matrix& negatives, double xi, bool in_batch, ReprLossStats* stats) {
  const std::size_t n = batch.obs.rows();
  require(n >= 2, ErrorCode::invalid_argument, "contrastive loss needs a batch of at least 2");
  const Var dphi = delta_phi(tape, net, params, tape.constant(batch.obs), tape.constant(batch.next_obs));
  const Var z = tape.constant(batch.z);
  const Var pos = positive_scores(tape, net.critic, dphi, z);

  Var scores;
  double m;
  if (in_batch) {
    scores = pairwise_scores(tape, net.critic, dphi, batch.z);
    Matrix mask(n, n);
    for (std::size_t i = 0; i < n; ++i) mask(i, i) = -1e9;
    scores = tape.add(scores, tape.constant(std::move(mask)));
    m = static_cast<double>(n - 1);
  } else {
    require(negatives.rows() >= 2, ErrorCode::invalid_argument,
            "degenerate negatives: need at least 2 negative skills, got " + std::to_string(negatives.rows()));
    scores = pairwise_scores(tape, net.critic, dphi, negatives);
    m = static_cast<double>(negatives.rows());
  }
  const Var neg = tape.add_scalar(tape.mean(tape.row_logsumexp(scores)), -std::log(m));
  const Var loss = tape.add(tape.scale(tape.mean(pos), -1.0), tape.scale(neg, xi));
  if (stats) {
    fill_common_stats(tape, dphi, pos, stats);
    stats->negative = tape.value(neg).item();
    stats->loss = tape.value(loss).item();
  }
  return loss;
}

Var metra_repr_loss(Tape& tape, const ReprNet& net, std::span<const Var> params, const ReprBatch& batch,
                    double lambda, ReprLossStats* stats) {
  require(lambda >= 0.0, ErrorCode::invalid_argument, "dual variable must be non-negative");
  const Var dphi = delta_phi(tape, net, params, tape.constant(batch.obs), tape.constant(batch.next_obs));
  const Var pos = positive_scores(tape, net.critic, dphi, tape.constant(batch.z));
  const Var sq = tape.mean(tape.row_sum(tape.square(dphi)));
  // -(E[f] + lambda (1 - E|dphi|^2)) = -E[f] + lambda E|dphi|^2 - lambda
  const Var loss = tape.add_scalar(tape.add(tape.scale(tape.mean(pos), -1.0), tape.scale(sq, lambda)), -lambda);
  if (stats) {
    fill_common_stats(tape, dphi, pos, stats);
    stats->negative = 0.0;
    stats->loss = tape.value(loss).item();
  }
  return loss;
}

double dual_update(DualVariable& dual, double e_sq_norm) {
  dual.lambda = std::max(0.0, dual.lambda - dual.lr * (1.0 + dual.slack - e_sq_norm));
  return dual.lambda;
}

// ---------------------------------------------------------------------------

std::size_t reward_feature_dim(const ReprNet& net, RewardMode mode) {
  const std::size_t base = critic_uses_skill(net.critic) ? net.d : 1;
  return mode == RewardMode::mi_only ? base + 1 : base;
}

Matrix reward_features(const ReprNet& net, const Matrix& dphi, RewardMode mode, const Matrix& negatives) {
  const std::size_t n = dphi.rows();
  const std::size_t k = reward_feature_dim(net, mode);
  Matrix out(n, k);
  Tape tape;
  const Var d = tape.constant(dphi);
  if (critic_uses_skill(net.critic)) {
    for (std::size_t i = 0; i < n; ++i) std::copy(dphi.row(i).begin(), dphi.row(i).end(), out.row(i).begin());
  } else {
    const Matrix& s = tape.value(positive_scores(tape, net.critic, d, d));
    for (std::size_t i = 0; i < n; ++i) out(i, 0) = s(i, 0);
  }
  if (mode == RewardMode::mi_only) {
    require(negatives.rows() >= 2, ErrorCode::invalid_argument, "degenerate negatives for mi_only reward");
    const Matrix& lse = tape.value(tape.row_logsumexp(pairwise_scores(tape, net.critic, d, negatives)));
    const double log_m = std::log(static_cast<double>(negatives.rows()));
    for (std::size_t i = 0; i < n; ++i) out(i, k - 1) = -(lse(i, 0) - log_m);
  }
  return out;
}

Matrix reward_weights(const ReprNet& net, RewardMode mode, const Matrix& z, double anti_weight) {
  const std::size_t n = z.rows();
  const std::size_t k = reward_feature_dim(net, mode);
  Matrix out(n, k, 1.0);
  if (critic_uses_skill(net.critic)) {
    require(z.cols() == net.d, ErrorCode::config, "skill dimension does not match the representation");
    for (std::size_t i = 0; i < n; ++i) std::copy(z.row(i).begin(), z.row(i).end(), out.row(i).begin());
  }
  if (mode == RewardMode::mi_only)
    for (std::size_t i = 0; i < n; ++i) out(i, k - 1) = anti_weight;
  return out;
}

std::vector<double> intrinsic_reward(const ReprNet& net, const Matrix& obs, const Matrix& next_obs,
                                     const Matrix& z, RewardMode mode, const Matrix& negatives,
                                     double anti_weight) {
  const Matrix f = reward_features(net, delta_phi(net, obs, next_obs), mode, negatives);
  const Matrix w = reward_weights(net, mode, z, anti_weight);
  std::vector<double> r(f.rows(), 0.0);
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t c = 0; c < f.cols(); ++c) r[i] += f(i, c) * w(i, c);
  return r;
}

// ---------------------------------------------------------------------------

EntropyEstimate entropy_diagnostic(const Matrix& dphi) {
  const std::size_t n = dphi.rows(), d = dphi.cols();
  require(n >= 2, ErrorCode::invalid_argument, "entropy estimate needs at least 2 samples");
  require(d >= 2, ErrorCode::invalid_argument, "entropy estimate needs d >= 2");
  std::vector<double> kappa(n), log_norm(n);
  Matrix u(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    kappa[i] = norm2(dphi.row(i));
    require(kappa[i] > 1e-12, ErrorCode::domain, "entropy estimate needs non-zero representation steps");
    for (std::size_t c = 0; c < d; ++c) u(i, c) = dphi(i, c) / kappa[i];
    log_norm[i] = log_partition_norm(d, kappa[i]);
  }
  const Matrix cos = matmul(u, transpose(u));
  EntropyEstimate out;
  const double log_n = std::log(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, kappa[i] * cos(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(kappa[i] * cos(i, j) - mx);
    const double log_p = mx + std::log(s) - log_n - log_norm[i];
    out.entropy -= log_p;
    out.log_partition_mean += log_norm[i];
  }
  out.entropy /= static_cast<double>(n);
  out.log_partition_mean /= static_cast<double>(n);
  return out;
}

}  // namespace csf
