#include "envs.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace csf {

EnvKind parse_env_kind(const std::string& name) {
  if (name == "point_mass_2d") return EnvKind::point_mass_2d;
  if (name == "chain_mdp") return EnvKind::chain_mdp;
  if (name == "grid_room") return EnvKind::grid_room;
  fail(ErrorCode::config, "unknown environment '" + name + "'");
}

std::string env_kind_name(EnvKind kind) {
  switch (kind) {
    case EnvKind::point_mass_2d: return "point_mass_2d";
    case EnvKind::chain_mdp: return "chain_mdp";
    case EnvKind::grid_room: return "grid_room";
  }
  return "?";
}

std::size_t EnvSpec::obs_dim() const {
  return kind == EnvKind::chain_mdp ? chain_states : 4;
}

std::size_t EnvSpec::action_dim() const { return kind == EnvKind::chain_mdp ? 1 : 2; }

void EnvSpec::validate() const {
  require(horizon >= 1, ErrorCode::config, "env horizon must be >= 1");
  require(dt > 0.0 && action_clamp > 0.0, ErrorCode::config, "env dt and action clamp must be positive");
  require(damping > 0.0 && damping <= 1.0, ErrorCode::config, "env damping must be in (0, 1]");
  if (kind == EnvKind::chain_mdp) require(chain_states >= 2, ErrorCode::config, "chain needs >= 2 states");
  if (kind == EnvKind::grid_room) require(bounds > 0.0, ErrorCode::config, "room bounds must be positive");
}

namespace {

std::vector<double> chain_obs(std::size_t n, std::size_t s) {
  std::vector<double> o(n, 0.0);
  o[s] = 1.0;
  return o;
}

}  // namespace

std::vector<double> observation_at(const EnvSpec& spec, double x, double y) {
  if (spec.kind == EnvKind::chain_mdp) {
    const auto s = static_cast<std::size_t>(std::clamp(std::lround(x), 0L, static_cast<long>(spec.chain_states) - 1));
    return chain_obs(spec.chain_states, s);
  }
  return {x, y, 0.0, 0.0};
}

EnvState reset(const EnvSpec& spec, Rng& rng) {
  spec.validate();
  EnvState s;
  if (spec.kind == EnvKind::chain_mdp) {
    s.obs = chain_obs(spec.chain_states, 0);
    return s;
  }
  s.x = spec.reset_noise * rng.normal();
  s.y = spec.reset_noise * rng.normal();
  s.obs = {s.x, s.y, 0.0, 0.0};
  return s;
}

StepResult step(const EnvSpec& spec, const EnvState& state, std::span<const double> action) {
  require(action.size() == spec.action_dim(), ErrorCode::dimension,
          "action has " + std::to_string(action.size()) + " entries, env expects " +
              std::to_string(spec.action_dim()));
  for (double a : action)
    require(!std::isnan(a), ErrorCode::invalid_argument, "invalid action: NaN");
  require(state.step < spec.horizon, ErrorCode::usage, "step past the horizon");

  StepResult r;
  EnvState& n = r.next;
  n.step = state.step + 1;
  if (spec.kind == EnvKind::chain_mdp) {
    const auto cur = static_cast<std::size_t>(std::lround(state.x));
    const std::size_t nxt = chain_next(spec.chain_states, cur, action[0] >= 0.0 ? 1 : 0);
    n.x = static_cast<double>(nxt);
    n.obs = chain_obs(spec.chain_states, nxt);
  } else {
    const double ax = std::clamp(action[0], -spec.action_clamp, spec.action_clamp);
    const double ay = std::clamp(action[1], -spec.action_clamp, spec.action_clamp);
    double vx = state.obs[2] + spec.dt * ax;
    double vy = state.obs[3] + spec.dt * ay;
    n.x = state.x + spec.dt * vx;
    n.y = state.y + spec.dt * vy;
    vx *= spec.damping;
    vy *= spec.damping;
    if (spec.kind == EnvKind::grid_room) {
      if (std::abs(n.x) > spec.bounds) {
        n.x = std::copysign(spec.bounds, n.x);
        vx = 0.0;
      }
      if (std::abs(n.y) > spec.bounds) {
        n.y = std::copysign(spec.bounds, n.y);
        vy = 0.0;
      }
    }
    n.obs = {n.x, n.y, vx, vy};
  }
  r.done = n.step == spec.horizon;
  return r;
}

// ---------------------------------------------------------------------------

void StateNormalizer::update(std::span<const double> obs) {
  require(obs.size() == mean_.size(), ErrorCode::dimension, "normalizer dimension mismatch");
  count_ += 1.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double delta = obs[i] - mean_[i];
    mean_[i] += delta / count_;
    m2_[i] += delta * (obs[i] - mean_[i]);
  }
}

void StateNormalizer::merge(const StateNormalizer& other) {
  require(other.dim() == dim(), ErrorCode::dimension, "normalizer dimension mismatch");
  if (other.count_ == 0.0) return;
  const double total = count_ + other.count_;
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    const double delta = other.mean_[i] - mean_[i];
    mean_[i] += delta * other.count_ / total;
    m2_[i] += other.m2_[i] + delta * delta * count_ * other.count_ / total;
  }
  count_ = total;
}

std::vector<double> StateNormalizer::variance() const {
  std::vector<double> v(mean_.size(), 0.0);
  if (count_ > 0.0)
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(m2_[i] / count_, 0.0);
  return v;
}

std::vector<double> StateNormalizer::normalize(std::span<const double> obs) const {
  require(obs.size() == mean_.size(), ErrorCode::dimension, "normalizer dimension mismatch");
  if (count_ == 0.0) return std::vector<double>(obs.begin(), obs.end());
  const auto var = variance();
  std::vector<double> out(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i)
    out[i] = (obs[i] - mean_[i]) / std::sqrt(var[i] + kNormalizerVarianceFloor);
  return out;
}

Matrix StateNormalizer::normalize(const Matrix& batch) const {
  require(batch.cols() == mean_.size(), ErrorCode::dimension, "normalizer dimension mismatch");
  if (count_ == 0.0) return batch;
  const auto var = variance();
  std::vector<double> inv(var.size());
  for (std::size_t i = 0; i < var.size(); ++i) inv[i] = 1.0 / std::sqrt(var[i] + kNormalizerVarianceFloor);
  Matrix out(batch.rows(), batch.cols());
  for (std::size_t r = 0; r < batch.rows(); ++r)
    for (std::size_t c = 0; c < batch.cols(); ++c) out(r, c) = (batch(r, c) - mean_[c]) * inv[c];
  return out;
}

ParamSet StateNormalizer::to_arrays(const std::string& prefix) const {
  ParamSet out;
  out.add(prefix + ".count", Matrix::scalar(count_));
  out.add(prefix + ".mean", Matrix::row_vector(mean_));
  out.add(prefix + ".m2", Matrix::row_vector(m2_));
  return out;
}

StateNormalizer StateNormalizer::from_arrays(const ParamSet& arrays, const std::string& prefix) {
  StateNormalizer n;
  n.count_ = arrays.at(prefix + ".count").item();
  const auto& mean = arrays.at(prefix + ".mean");
  const auto& m2 = arrays.at(prefix + ".m2");
  require(mean.same_shape(m2), ErrorCode::io, "normalizer arrays disagree");
  n.mean_.assign(mean.values().begin(), mean.values().end());
  n.m2_.assign(m2.values().begin(), m2.values().end());
  return n;
}

// ---------------------------------------------------------------------------

std::size_t chain_next(std::size_t n_states, std::size_t state, std::size_t action) {
  require(state < n_states && action < kChainActions, ErrorCode::invalid_argument, "chain index out of range");
  if (action == 1) return std::min(state + 1, n_states - 1);
  return state == 0 ? 0 : state - 1;
}

namespace {

void check_chain_tables(std::size_t n, const ChainPolicy& policy, std::size_t feature_rows) {
  require(policy.size() == n, ErrorCode::dimension, "policy table must have one action per state");
  for (auto a : policy) require(a < kChainActions, ErrorCode::invalid_argument, "policy action out of range");
  require(feature_rows == n, ErrorCode::dimension, "feature table must have one row per state");
}

}  // namespace

ChainFeatures chain_sf_oracle(std::size_t n, const ChainPolicy& policy, const ChainFeatures& features,
                              double gamma, std::size_t horizon) {
  check_chain_tables(n, policy, features.size());
  require(gamma >= 0.0, ErrorCode::invalid_argument, "discount must be non-negative");
  const std::size_t d = features[0][0].size();
  const std::size_t pairs = n * kChainActions;
  auto idx = [](std::size_t s, std::size_t a) { return s * kChainActions + a; };

  ChainFeatures psi(n, std::vector<std::vector<double>>(kChainActions, std::vector<double>(d, 0.0)));
  if (horizon > 0) {
    for (std::size_t h = 0; h < horizon; ++h) {
      ChainFeatures next = psi;
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t a = 0; a < kChainActions; ++a) {
          const std::size_t sp = chain_next(n, s, a);
          for (std::size_t k = 0; k < d; ++k)
            next[s][a][k] = features[s][a][k] + gamma * psi[sp][policy[sp]][k];
        }
      psi = std::move(next);
    }
    return psi;
  }

  if (gamma >= 1.0)
    fail(ErrorCode::numerical, "successor features diverge for gamma >= 1 without a horizon");
  // (I - gamma P) psi = f over (state, action) pairs.
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(pairs), static_cast<Eigen::Index>(pairs));
  Eigen::MatrixXd rhs(static_cast<Eigen::Index>(pairs), static_cast<Eigen::Index>(d));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t a = 0; a < kChainActions; ++a) {
      const std::size_t sp = chain_next(n, s, a);
      const auto row = static_cast<Eigen::Index>(idx(s, a));
      system(row, static_cast<Eigen::Index>(idx(sp, policy[sp]))) -= gamma;
      require(features[s][a].size() == d, ErrorCode::dimension, "ragged feature table");
      for (std::size_t k = 0; k < d; ++k) rhs(row, static_cast<Eigen::Index>(k)) = features[s][a][k];
    }
  const Eigen::MatrixXd sol = system.partialPivLu().solve(rhs);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t a = 0; a < kChainActions; ++a)
      for (std::size_t k = 0; k < d; ++k)
        psi[s][a][k] = sol(static_cast<Eigen::Index>(idx(s, a)), static_cast<Eigen::Index>(k));
  return psi;
}

std::vector<std::vector<double>> chain_value_iteration(std::size_t n, const ChainPolicy& policy,
                                                       const std::vector<std::vector<double>>& reward,
                                                       double gamma, double tol) {
  check_chain_tables(n, policy, reward.size());
  require(gamma >= 0.0 && gamma < 1.0, ErrorCode::invalid_argument, "value iteration needs gamma in [0, 1)");
  std::vector<std::vector<double>> q(n, std::vector<double>(kChainActions, 0.0));
  for (int it = 0; it < 1000000; ++it) {
    double change = 0.0;
    auto next = q;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t a = 0; a < kChainActions; ++a) {
        const std::size_t sp = chain_next(n, s, a);
        next[s][a] = reward[s][a] + gamma * q[sp][policy[sp]];
        change = std::max(change, std::abs(next[s][a] - q[s][a]));
      }
    q = std::move(next);
    if (change < tol) break;
  }
  return q;
}

// ---------------------------------------------------------------------------

void write_transitions_jsonl(const std::string& path, const std::vector<TransitionRecord>& rows) {
  std::ofstream f(path, std::ios::trunc);
  require(static_cast<bool>(f), ErrorCode::io, "cannot write " + path);
  for (const auto& r : rows) {
    nlohmann::json j;
    j["t"] = r.t;
    j["obs"] = r.obs;
    j["action"] = r.action;
    j["next_obs"] = r.next_obs;
    j["z"] = r.z;
    j["episode_id"] = r.episode_id;
    f << j.dump() << '\n';
  }
  require(static_cast<bool>(f), ErrorCode::io, "short write to " + path);
}

std::vector<TransitionRecord> read_transitions_jsonl(const std::string& path) {
  std::ifstream f(path);
  require(static_cast<bool>(f), ErrorCode::io, "cannot read " + path);
  std::vector<TransitionRecord> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TransitionRecord r;
      r.t = j.at("t").get<std::size_t>();
      r.obs = j.at("obs").get<std::vector<double>>();
      r.action = j.at("action").get<std::vector<double>>();
      r.next_obs = j.at("next_obs").get<std::vector<double>>();
      r.z = j.at("z").get<std::vector<double>>();
      r.episode_id = j.at("episode_id").get<std::size_t>();
      rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::io, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace csf
