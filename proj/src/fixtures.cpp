#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hypersphere.hpp"
#include "sf_policy.hpp"

namespace csf {

ReprBatch make_line_graph_data(std::size_t nodes, std::size_t per_edge, Rng& rng) {
  require(nodes >= 2 && per_edge >= 1, ErrorCode::invalid_argument, "line graph needs >= 2 nodes");
  const std::size_t n = 2 * (nodes - 1) * per_edge;
  ReprBatch b{Matrix(n, nodes), Matrix(n, nodes), Matrix(n, 2)};
  std::size_t row = 0;
  for (std::size_t e = 0; e + 1 < nodes; ++e)
    for (std::size_t k = 0; k < per_edge; ++k)
      for (int dir = 0; dir < 2; ++dir) {
        const std::size_t from = dir == 0 ? e : e + 1;
        const std::size_t to = dir == 0 ? e + 1 : e;
        b.obs(row, from) = 1.0;
        b.next_obs(row, to) = 1.0;
        const double angle = rng.uniform(-0.5, 0.5) * std::numbers::pi + (dir == 0 ? 0.0 : std::numbers::pi);
        b.z(row, 0) = std::cos(angle);
        b.z(row, 1) = std::sin(angle);
        ++row;
      }
  return b;
}

LineGraphFit fit_line_graph(ReprObjective objective, const ReprBatch& data, std::uint64_t seed,
                            const LineGraphOptions& options) {
  LineGraphFit fit;
  fit.net = make_repr_net(CriticKind::inner_product, data.obs.cols(), 2, 0, 0, seed);
  Rng rng(seed);
  for (double& v : fit.net.params[0].values()) v = 0.01 * rng.normal();
  AdamState adam = AdamState::for_params(fit.net.params, {options.lr});
  DualVariable dual = options.dual;
  const double decay = std::pow(options.lr_final / options.lr, 1.0 / std::max<double>(1.0, options.steps - 1.0));
  for (std::size_t it = 0; it < options.steps; ++it) {
    adam.config.lr = options.lr * std::pow(decay, static_cast<double>(it));
    Tape tape;
    const auto vars = tape.bind(fit.net.params);
    ReprLossStats stats;
    Var loss;
    if (objective == ReprObjective::csf) {
      const Matrix neg = sample_skills(SkillMode::continuous, 2, options.negatives, rng);
      loss = csf_repr_loss(tape, fit.net, vars, data, neg, options.xi, false, &stats);
    } else {
      loss = metra_repr_loss(tape, fit.net, vars, data, dual.lambda, &stats);
    }
    tape.backward(loss);
    adam_step(fit.net.params, tape.gradients(vars), adam);
    if (objective == ReprObjective::metra_dual) dual_update(dual, stats.e_sq_norm);
  }
  Tape tape;
  const auto vars = tape.bind(fit.net.params);
  ReprLossStats stats;
  metra_repr_loss(tape, fit.net, vars, data, 0.0, &stats);
  fit.e_sq_norm = stats.e_sq_norm;
  fit.positive = stats.positive;
  fit.lambda = dual.lambda;
  return fit;
}

}  // namespace csf

namespace csf {

namespace {

struct ChainInputs {
  Matrix obs, action, z;
};

ChainInputs chain_pair_inputs(const ChainSfProblem& p) {
  const std::size_t rows = p.states * kChainActions;
  ChainInputs in{Matrix(rows, p.states), Matrix(rows, 1), Matrix(rows, p.z.size())};
  for (std::size_t s = 0; s < p.states; ++s)
    for (std::size_t a = 0; a < kChainActions; ++a) {
      const std::size_t r = s * kChainActions + a;
      in.obs(r, s) = 1.0;
      in.action(r, 0) = a == 1 ? 1.0 : -1.0;
      std::copy(p.z.begin(), p.z.end(), in.z.row(r).begin());
    }
  return in;
}

}  // namespace

ChainSfProblem make_chain_sf_problem(std::size_t states, double gamma, std::uint64_t seed) {
  ChainSfProblem p;
  p.states = states;
  p.gamma = gamma;
  Rng rng(seed);
  p.policy.resize(states);
  for (auto& a : p.policy) a = rng.index(kChainActions);
  auto phi = [&](std::size_t k) {
    return std::vector<double>{static_cast<double>(k) / static_cast<double>(states - 1),
                               static_cast<double>(k % 2)};
  };
  p.features.assign(states, std::vector<std::vector<double>>(kChainActions));
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t a = 0; a < kChainActions; ++a) {
      const auto from = phi(s), to = phi(chain_next(states, s, a));
      p.features[s][a] = {to[0] - from[0], to[1] - from[1]};
    }
  return p;
}

ParamSet train_chain_sf(const ChainSfProblem& p, std::uint64_t seed, const ChainSfOptions& o) {
  const std::size_t d = p.features[0][0].size();
  ParamSet psi = make_successor_net(p.states, 1, p.z.size(), d, o.hidden, 2, seed);
  ParamSet target = psi;
  AdamState adam = AdamState::for_params(psi, {o.lr});
  const ChainInputs in = chain_pair_inputs(p);
  const std::size_t rows = in.obs.rows();

  Matrix feat(rows, d), next_obs(rows, p.states), next_action(rows, 1);
  for (std::size_t s = 0; s < p.states; ++s)
    for (std::size_t a = 0; a < kChainActions; ++a) {
      const std::size_t r = s * kChainActions + a;
      const std::size_t sp = chain_next(p.states, s, a);
      std::copy(p.features[s][a].begin(), p.features[s][a].end(), feat.row(r).begin());
      next_obs(r, sp) = 1.0;
      next_action(r, 0) = p.policy[sp] == 1 ? 1.0 : -1.0;
    }

  const double decay = std::pow(o.lr_final / o.lr, 1.0 / std::max<double>(1.0, o.updates - 1.0));
  for (std::size_t it = 0; it < o.updates; ++it) {
    adam.config.lr = o.lr * std::pow(decay, static_cast<double>(it));
    const Matrix y = sf_td_target(target, feat, next_obs, next_action, in.z, p.gamma);
    Tape tape;
    const auto vars = tape.bind(psi);
    tape.backward(sf_td_loss(tape, vars, in.obs, in.action, in.z, y));
    adam_step(psi, tape.gradients(vars), adam);
    ema_update(psi, target, o.tau);
  }
  return psi;
}

ChainFeatures chain_successor_table(const ParamSet& psi, const ChainSfProblem& p) {
  const ChainInputs in = chain_pair_inputs(p);
  const Matrix out = successor_forward(psi, in.obs, in.action, in.z);
  ChainFeatures table(p.states, std::vector<std::vector<double>>(kChainActions));
  for (std::size_t s = 0; s < p.states; ++s)
    for (std::size_t a = 0; a < kChainActions; ++a) {
      const auto row = out.row(s * kChainActions + a);
      table[s][a].assign(row.begin(), row.end());
    }
  return table;
}

}  // namespace csf
