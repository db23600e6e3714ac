#include "trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "evalsuite.hpp"
#include "hypersphere.hpp"

namespace csf {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t action_dim,
                           std::size_t skill_dim)
    : capacity_(capacity), obs_dim_(obs_dim), action_dim_(action_dim), skill_dim_(skill_dim) {
  require(capacity >= 1, ErrorCode::invalid_argument, "buffer capacity must be >= 1");
}

void ReplayBuffer::add(std::span<const double> obs, std::span<const double> action,
                       std::span<const double> next_obs, std::span<const double> z, std::uint64_t episode,
                       std::uint64_t t) {
  require(obs.size() == obs_dim_ && next_obs.size() == obs_dim_ && action.size() == action_dim_ &&
              z.size() == skill_dim_,
          ErrorCode::dimension, "transition does not match the buffer's dimensions");
  auto put = [&](std::vector<double>& store, std::span<const double> v) {
    if (cursor_ == size_ && size_ < capacity_) {
      store.insert(store.end(), v.begin(), v.end());
    } else {
      std::copy(v.begin(), v.end(), store.begin() + static_cast<std::ptrdiff_t>(cursor_ * v.size()));
    }
  };
  put(obs_, obs);
  put(action_, action);
  put(next_obs_, next_obs);
  put(z_, z);
  const double ep = static_cast<double>(episode), tt = static_cast<double>(t);
  put(episode_, std::span<const double>(&ep, 1));
  put(t_, std::span<const double>(&tt, 1));
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  require(size_ > 0, ErrorCode::usage, "cannot sample from an empty buffer");
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng.index(size_);
  return idx;
}

ReplayBuffer::Batch ReplayBuffer::gather(std::span<const std::size_t> idx) const {
  Batch b{Matrix(idx.size(), obs_dim_), Matrix(idx.size(), action_dim_), Matrix(idx.size(), obs_dim_),
          Matrix(idx.size(), skill_dim_)};
  auto copy_row = [](const std::vector<double>& store, std::size_t width, std::size_t i, std::span<double> dst) {
    std::copy_n(store.begin() + static_cast<std::ptrdiff_t>(i * width), width, dst.begin());
  };
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < size_, ErrorCode::range, "buffer index out of range");
    copy_row(obs_, obs_dim_, idx[r], b.obs.row(r));
    copy_row(action_, action_dim_, idx[r], b.action.row(r));
    copy_row(next_obs_, obs_dim_, idx[r], b.next_obs.row(r));
    copy_row(z_, skill_dim_, idx[r], b.z.row(r));
  }
  return b;
}

TransitionRecord ReplayBuffer::record(std::size_t i) const {
  require(i < size_, ErrorCode::range, "buffer index out of range");
  auto slice = [i](const std::vector<double>& store, std::size_t w) {
    return std::vector<double>(store.begin() + static_cast<std::ptrdiff_t>(i * w),
                               store.begin() + static_cast<std::ptrdiff_t>((i + 1) * w));
  };
  TransitionRecord r;
  r.t = static_cast<std::size_t>(t_[i]);
  r.obs = slice(obs_, obs_dim_);
  r.action = slice(action_, action_dim_);
  r.next_obs = slice(next_obs_, obs_dim_);
  r.z = slice(z_, skill_dim_);
  r.episode_id = static_cast<std::size_t>(episode_[i]);
  return r;
}

std::uint64_t ReplayBuffer::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t header[2] = {size_, cursor_};
  mix(header, sizeof header);
  for (const auto* v : {&obs_, &action_, &next_obs_, &z_, &episode_, &t_}) mix(v->data(), v->size() * sizeof(double));
  return h;
}

void ReplayBuffer::to_arrays(ParamSet& out, const std::string& prefix) const {
  out.add(prefix + ".meta", Matrix(1, 6, {static_cast<double>(capacity_), static_cast<double>(obs_dim_),
                                          static_cast<double>(action_dim_), static_cast<double>(skill_dim_),
                                          static_cast<double>(size_), static_cast<double>(cursor_)}));
  out.add(prefix + ".obs", Matrix(size_, obs_dim_, obs_));
  out.add(prefix + ".action", Matrix(size_, action_dim_, action_));
  out.add(prefix + ".next_obs", Matrix(size_, obs_dim_, next_obs_));
  out.add(prefix + ".z", Matrix(size_, skill_dim_, z_));
  out.add(prefix + ".episode", Matrix(size_, 1, episode_));
  out.add(prefix + ".t", Matrix(size_, 1, t_));
}

ReplayBuffer ReplayBuffer::from_arrays(const ParamSet& in, const std::string& prefix) {
  const Matrix& meta = in.at(prefix + ".meta");
  require(meta.size() == 6, ErrorCode::io, "corrupt buffer metadata");
  auto as_size = [](double v) { return static_cast<std::size_t>(v); };
  ReplayBuffer b(as_size(meta[0]), as_size(meta[1]), as_size(meta[2]), as_size(meta[3]));
  b.size_ = as_size(meta[4]);
  b.cursor_ = as_size(meta[5]);
  require(b.size_ <= b.capacity_ && b.cursor_ < b.capacity_, ErrorCode::io, "corrupt buffer metadata");
  auto take = [&](const std::string& key, std::size_t width, std::vector<double>& dst) {
    const Matrix& m = in.at(prefix + key);
    require(m.rows() == b.size_ && (b.size_ == 0 || m.cols() == width), ErrorCode::io,
            "buffer array " + key + " has the wrong shape");
    dst.assign(m.values().begin(), m.values().end());
  };
  take(".obs", b.obs_dim_, b.obs_);
  take(".action", b.action_dim_, b.action_);
  take(".next_obs", b.obs_dim_, b.next_obs_);
  take(".z", b.skill_dim_, b.z_);
  take(".episode", 1, b.episode_);
  take(".t", 1, b.t_);
  return b;
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_csv_header() {
  return "iteration,env_steps,loss_repr,loss_sf,loss_actor,alpha,mean_reward,e_sq_norm_dphi,coverage,"
         "goal_staying_frac,wall_s\n";
}

std::string metrics_csv_row(const IterationMetrics& m) {
  std::ostringstream out;
  out.precision(17);
  auto field = [&out](double v) {
    out << ',';
    if (!std::isnan(v)) out << v;
  };
  out << m.iteration << ',' << m.env_steps;
  for (double v : {m.loss_repr, m.loss_sf, m.loss_actor, m.alpha, m.mean_reward, m.e_sq_norm_dphi, m.coverage,
                   m.goal_staying_frac, m.wall_s})
    field(v);
  out << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

std::uint64_t net_seed(std::uint64_t seed, const std::string& name) { return seed ^ hash_name(name); }

ReprBatch normalized_batch(const StateNormalizer& norm, const ReplayBuffer::Batch& b) {
  return {norm.normalize(b.obs), norm.normalize(b.next_obs), b.z};
}

// 64-bit words split into exactly representable 32-bit halves.
Matrix words_to_matrix(const std::vector<std::uint64_t>& words) {
  Matrix m(1, 2 * words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    m[2 * i] = static_cast<double>(words[i] >> 32);
    m[2 * i + 1] = static_cast<double>(words[i] & 0xffffffffULL);
  }
  return m;
}

std::vector<std::uint64_t> matrix_to_words(const Matrix& m) {
  require(m.size() % 2 == 0, ErrorCode::io, "corrupt random-stream state");
  std::vector<std::uint64_t> w(m.size() / 2);
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = (static_cast<std::uint64_t>(m[2 * i]) << 32) | static_cast<std::uint64_t>(m[2 * i + 1]);
  return w;
}

void adam_to_arrays(const AdamState& s, ParamSet& out, const std::string& prefix) {
  out.add(prefix + ".step", Matrix::scalar(static_cast<double>(s.step)));
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    out.add(prefix + ".m" + std::to_string(i), s.m[i]);
    out.add(prefix + ".v" + std::to_string(i), s.v[i]);
  }
}

void adam_from_arrays(AdamState& s, const ParamSet& in, const std::string& prefix) {
  s.step = static_cast<std::int64_t>(in.at(prefix + ".step").item());
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    const Matrix& m = in.at(prefix + ".m" + std::to_string(i));
    const Matrix& v = in.at(prefix + ".v" + std::to_string(i));
    require(m.same_shape(s.m[i]) && v.same_shape(s.v[i]), ErrorCode::dimension,
            "optimizer state " + prefix + " does not match the network");
    s.m[i] = m;
    s.v[i] = v;
  }
}

void params_from_arrays(ParamSet& params, const ParamSet& in) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(in.contains(params.name(i)), ErrorCode::dimension, "checkpoint lacks " + params.name(i));
    const Matrix& m = in.at(params.name(i));
    require(m.same_shape(params[i]), ErrorCode::dimension,
            "checkpoint array " + params.name(i) + " is " + shape_string(m) + ", configuration expects " +
                shape_string(params[i]));
    params[i] = m;
  }
}

ParamSet prefixed(const ParamSet& params, const std::string& prefix) {
  ParamSet out;
  for (std::size_t i = 0; i < params.size(); ++i) out.add(prefix + params.name(i), params[i]);
  return out;
}

ParamSet strip_prefix(const ParamSet& in, const std::string& prefix, const ParamSet& like) {
  ParamSet out;
  for (std::size_t i = 0; i < like.size(); ++i) {
    const std::string key = prefix + like.name(i);
    require(in.contains(key), ErrorCode::dimension, "checkpoint lacks " + key);
    out.add(like.name(i), in.at(key));
  }
  return out;
}

void append(ParamSet& out, const ParamSet& more) {
  for (std::size_t i = 0; i < more.size(); ++i) out.add(more.name(i), more[i]);
}

Matrix dims_row(const TrainConfig& c) {
  return Matrix(1, 8,
                {static_cast<double>(c.env.obs_dim()), static_cast<double>(c.env.action_dim()),
                 static_cast<double>(c.skill_dim), static_cast<double>(c.hidden_dim),
                 static_cast<double>(c.hidden_layers), static_cast<double>(static_cast<int>(c.critic)),
                 static_cast<double>(static_cast<int>(c.reward_mode)), static_cast<double>(static_cast<int>(c.env.kind))});
}

const char* kDimNames[] = {"obs_dim", "action_dim", "skill.dim", "net.hidden_dim",
                           "net.hidden_layers", "repr.critic", "reward.mode", "env.name"};

}  // namespace

void evaluate_snapshot(const TrainConfig& c, const AgentView& agent, std::size_t iteration, IterationMetrics& m) {
  if (c.env.kind == EnvKind::chain_mdp) return;
  // Evaluation draws from its own stream so it never shifts training.
  Rng eval_rng(c.seed ^ (0x9e3779b97f4a7c15ULL * iteration));
  const Matrix skills = sample_skills(c.skill_mode, c.skill_dim, c.eval_skills, eval_rng);
  m.coverage =
      static_cast<double>(measure_coverage(c.env, deterministic_actions(agent), skills, c.eval_cell_size, eval_rng));
  if (c.eval_goals > 0) {
    const auto goals = sample_goals(c.eval_goals, c.eval_goal_range, c.eval_radius, eval_rng);
    m.goal_staying_frac = evaluate_goals(c.env, agent, goals, c.eval_reinference_period, eval_rng).mean;
  }
}

Trainer::Trainer(TrainConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  const std::size_t obs = c.env.obs_dim(), act = c.env.action_dim();
  repr_ = make_repr_net(c.critic, obs, c.skill_dim, c.hidden_dim, c.hidden_layers, net_seed(c.seed, "phi"));
  psi_ = make_successor_net(obs, act, c.skill_dim, reward_feature_dim(repr_, c.reward_mode), c.hidden_dim,
                            c.hidden_layers, net_seed(c.seed, "psi"));
  psi_target_ = psi_;
  pi_ = make_policy_net(obs, c.skill_dim, act, c.hidden_dim, c.hidden_layers, net_seed(c.seed, "pi"));
  const AdamConfig adam{c.lr};
  repr_adam_ = AdamState::for_params(repr_.params, adam);
  psi_adam_ = AdamState::for_params(psi_, adam);
  pi_adam_ = AdamState::for_params(pi_, adam);
  entropy_ = make_entropy_tuner(c.init_alpha, c.resolved_target_entropy(), AdamConfig{c.alpha_lr});
  dual_ = DualVariable{c.dual_init, c.dual_lr, c.dual_slack};
  norm_ = StateNormalizer(obs);
  buffer_ = ReplayBuffer(c.buffer_capacity, obs, act, c.skill_dim);
  rng_ = Rng(c.seed);
}

RoundStats Trainer::collect_round() {
  const auto& c = config_;
  const std::size_t n = c.trajectories_per_round;
  const Matrix skills = sample_skills(c.skill_mode, c.skill_dim, n, rng_);
  std::vector<EnvState> states;
  for (std::size_t i = 0; i < n; ++i) states.push_back(reset(c.env, rng_));

  // Episodes are stepped in lockstep; each keeps its own transitions so a
  // fault leaves the buffer untouched.
  struct Step {
    std::vector<double> obs, action, next_obs;
  };
  std::vector<std::vector<Step>> episodes(n);
  StateNormalizer round_stats(c.env.obs_dim());
  for (std::size_t i = 0; i < n; ++i) round_stats.update(states[i].obs);
  Matrix obs(n, c.env.obs_dim());
  for (std::size_t t = 0; t < c.env.horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) std::copy(states[i].obs.begin(), states[i].obs.end(), obs.row(i).begin());
    const Matrix actions = policy_act(pi_, norm_.normalize(obs), skills, rng_, false);
    for (std::size_t i = 0; i < n; ++i) {
      const StepResult r = step(c.env, states[i], actions.row(i));
      episodes[i].push_back({states[i].obs, std::vector<double>(actions.row(i).begin(), actions.row(i).end()),
                             r.next.obs});
      round_stats.update(r.next.obs);
      states[i] = r.next;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < episodes[i].size(); ++t) {
      const Step& s = episodes[i][t];
      buffer_.add(s.obs, s.action, s.next_obs, skills.row(i), episodes_, t);
    }
    ++episodes_;
  }
  norm_.merge(round_stats);
  env_steps_ += n * c.env.horizon;
  return {n * c.env.horizon, n};
}

void Trainer::halt(const std::string& what, const ReplayBuffer::Batch& batch) const {
  std::string where = "(no dump directory)";
  if (!dump_dir_.empty()) {
    fs::create_directories(dump_dir_);
    const std::string path = (fs::path(dump_dir_) / "nan_batch.jsonl").string();
    std::vector<TransitionRecord> rows;
    for (std::size_t i = 0; i < batch.obs.rows(); ++i) {
      TransitionRecord r;
      r.t = i;
      r.obs.assign(batch.obs.row(i).begin(), batch.obs.row(i).end());
      r.action.assign(batch.action.row(i).begin(), batch.action.row(i).end());
      r.next_obs.assign(batch.next_obs.row(i).begin(), batch.next_obs.row(i).end());
      r.z.assign(batch.z.row(i).begin(), batch.z.row(i).end());
      rows.push_back(std::move(r));
    }
    write_transitions_jsonl(path, rows);
    where = path;
  }
  fail(ErrorCode::numerical, "non-finite " + what + " at iteration " + std::to_string(iteration_) +
                                 "; offending batch dumped to " + where);
}

UpdateStats Trainer::update() {
  const auto& c = config_;
  UpdateStats out;
  const auto idx = buffer_.sample_indices(c.batch_size, rng_);
  const ReplayBuffer::Batch raw = buffer_.gather(idx);
  const ReprBatch batch = normalized_batch(norm_, raw);
  const std::size_t n = c.batch_size;

  // phi
  {
    Tape tape;
    const auto vars = tape.bind(repr_.params);
    ReprLossStats stats;
    Var loss;
    if (c.objective == ReprObjective::csf) {
      const Matrix negatives =
          c.in_batch_negatives ? Matrix() : sample_skills(c.skill_mode, c.skill_dim, c.negatives, rng_);
      loss = csf_repr_loss(tape, repr_, vars, batch, negatives, c.xi, c.in_batch_negatives, &stats);
    } else {
      loss = metra_repr_loss(tape, repr_, vars, batch, dual_.lambda, &stats);
    }
    if (!std::isfinite(stats.loss)) halt("representation loss", raw);
    tape.backward(loss);
    Gradients g = tape.gradients(vars);
    clip_global_norm(g, c.grad_clip);
    adam_step(repr_.params, g, repr_adam_);
    if (c.objective == ReprObjective::metra_dual) dual_update(dual_, stats.e_sq_norm);
    out.loss_repr = stats.loss;
    out.e_sq_norm = stats.e_sq_norm;
  }

  // Rewards are relabeled from the current phi on every update.
  const Matrix dphi = delta_phi(repr_, batch.obs, batch.next_obs);
  const Matrix reward_negatives = c.reward_mode == RewardMode::mi_only
                                      ? sample_skills(c.skill_mode, c.skill_dim, c.negatives, rng_)
                                      : Matrix();
  const Matrix features = reward_features(repr_, dphi, c.reward_mode, reward_negatives);
  const Matrix weights = reward_weights(repr_, c.reward_mode, batch.z, c.anti_exploration_weight());
  {
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < features.cols(); ++k) r += features(i, k) * weights(i, k);
    out.mean_reward = r / static_cast<double>(n);
  }

  // psi
  {
    const Matrix next_action = policy_act(pi_, batch.next_obs, batch.z, rng_, false);
    const Matrix target = sf_td_target(psi_target_, features, batch.next_obs, next_action, batch.z, c.gamma);
    Tape tape;
    const auto vars = tape.bind(psi_);
    const Var loss = sf_td_loss(tape, vars, batch.obs, raw.action, batch.z, target);
    out.loss_sf = tape.value(loss).item();
    if (!std::isfinite(out.loss_sf)) halt("successor-feature loss", raw);
    tape.backward(loss);
    Gradients g = tape.gradients(vars);
    clip_global_norm(g, c.grad_clip);
    adam_step(psi_, g, psi_adam_);
  }

  // pi and alpha
  {
    const Matrix noise = policy_noise(pi_, n, rng_);
    Tape tape;
    const auto vars = tape.bind(pi_);
    ActorLossStats stats;
    const Var loss = actor_loss(tape, vars, frozen_successor(psi_), batch.obs, batch.z, weights, noise,
                                entropy_.alpha(), &stats);
    if (!std::isfinite(stats.loss)) halt("actor loss", raw);
    tape.backward(loss);
    Gradients g = tape.gradients(vars);
    clip_global_norm(g, c.grad_clip);
    adam_step(pi_, g, pi_adam_);
    entropy_coef_update(entropy_, stats.mean_log_prob);
    out.loss_actor = stats.loss;
    out.mean_log_prob = stats.mean_log_prob;
  }

  ema_update(psi_, psi_target_, c.tau);
  return out;
}

IterationMetrics Trainer::iterate() {
  const auto start = std::chrono::steady_clock::now();
  const auto& c = config_;
  collect_round();
  ++iteration_;

  IterationMetrics m;
  m.iteration = iteration_;
  if (iteration_ > c.warmup_rounds && buffer_.size() >= c.batch_size && c.updates_per_round > 0) {
    UpdateStats sum;
    for (std::size_t k = 0; k < c.updates_per_round; ++k) {
      const UpdateStats u = update();
      sum.loss_repr += u.loss_repr;
      sum.loss_sf += u.loss_sf;
      sum.loss_actor += u.loss_actor;
      sum.mean_reward += u.mean_reward;
      sum.e_sq_norm += u.e_sq_norm;
    }
    const double k = static_cast<double>(c.updates_per_round);
    m.loss_repr = sum.loss_repr / k;
    m.loss_sf = sum.loss_sf / k;
    m.loss_actor = sum.loss_actor / k;
    m.mean_reward = sum.mean_reward / k;
    m.e_sq_norm_dphi = sum.e_sq_norm / k;
  }
  m.alpha = alpha();
  m.lambda = c.objective == ReprObjective::metra_dual ? dual_.lambda : kMissing;

  if (c.eval_every > 0 && iteration_ % c.eval_every == 0)
    evaluate_snapshot(c, AgentView{repr_, pi_, norm_, c.skill_mode}, iteration_, m);
  m.env_steps = env_steps_;
  m.buffer_size = buffer_.size();
  if (c.log_wall_time)
    m.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

ParamSet Trainer::to_arrays() const {
  ParamSet out;
  out.add("meta.config_version", Matrix::scalar(kConfigVersion));
  out.add("meta.dims", dims_row(config_));
  out.add("meta.counters", Matrix(1, 3, {static_cast<double>(iteration_), static_cast<double>(env_steps_),
                                         static_cast<double>(episodes_)}));
  out.add("meta.rng", words_to_matrix(rng_.state()));
  append(out, repr_.params);
  append(out, psi_);
  append(out, prefixed(psi_target_, "target."));
  append(out, pi_);
  append(out, entropy_.log_alpha);
  out.add("dual.lambda", Matrix::scalar(dual_.lambda));
  adam_to_arrays(repr_adam_, out, "adam.phi");
  adam_to_arrays(psi_adam_, out, "adam.psi");
  adam_to_arrays(pi_adam_, out, "adam.pi");
  adam_to_arrays(entropy_.adam, out, "adam.alpha");
  append(out, norm_.to_arrays("norm"));
  buffer_.to_arrays(out, "buffer");
  return out;
}

void Trainer::save(const std::string& path) const {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  save_arrays(path, to_arrays());
}

Trainer Trainer::load(const std::string& path, TrainConfig config) {
  const ParamSet in = load_arrays(path);
  Trainer t(std::move(config));
  require(in.contains("meta.dims"), ErrorCode::io, path + " is not a training checkpoint");
  const Matrix& dims = in.at("meta.dims");
  const Matrix want = dims_row(t.config_);
  require(dims.same_shape(want), ErrorCode::io, path + ": corrupt checkpoint metadata");
  for (std::size_t i = 0; i < want.size(); ++i)
    require(dims[i] == want[i], ErrorCode::dimension,
            std::string("checkpoint disagrees with the configuration on ") + kDimNames[i] + " (checkpoint " +
                std::to_string(static_cast<long long>(dims[i])) + ", config " +
                std::to_string(static_cast<long long>(want[i])) + ")");

  // Everything is decoded into locals first; `t` is only returned whole.
  const Matrix& counters = in.at("meta.counters");
  require(counters.size() == 3, ErrorCode::io, "corrupt checkpoint counters");
  t.iteration_ = static_cast<std::size_t>(counters[0]);
  t.env_steps_ = static_cast<std::size_t>(counters[1]);
  t.episodes_ = static_cast<std::size_t>(counters[2]);
  t.rng_.set_state(matrix_to_words(in.at("meta.rng")));
  params_from_arrays(t.repr_.params, in);
  params_from_arrays(t.psi_, in);
  ParamSet target = strip_prefix(in, "target.", t.psi_target_);
  params_from_arrays(t.psi_target_, target);
  params_from_arrays(t.pi_, in);
  params_from_arrays(t.entropy_.log_alpha, in);
  t.dual_.lambda = in.at("dual.lambda").item();
  adam_from_arrays(t.repr_adam_, in, "adam.phi");
  adam_from_arrays(t.psi_adam_, in, "adam.psi");
  adam_from_arrays(t.pi_adam_, in, "adam.pi");
  adam_from_arrays(t.entropy_.adam, in, "adam.alpha");
  t.norm_ = StateNormalizer::from_arrays(in, "norm");
  require(t.norm_.dim() == t.config_.env.obs_dim(), ErrorCode::dimension, "normalizer width mismatch");
  ReplayBuffer buffer = ReplayBuffer::from_arrays(in, "buffer");
  require(buffer.obs_dim() == t.config_.env.obs_dim() && buffer.action_dim() == t.config_.env.action_dim() &&
              buffer.skill_dim() == t.config_.skill_dim,
          ErrorCode::dimension, "buffer dimensions disagree with the configuration");
  t.buffer_ = std::move(buffer);
  return t;
}

// ---------------------------------------------------------------------------

ExperimentReport run_experiment(const TrainConfig& config, const std::string& run_dir,
                                const ExperimentCallbacks& callbacks) {
  config.validate();
  fs::create_directories(fs::path(run_dir) / "checkpoints");
  {
    std::ofstream f(fs::path(run_dir) / "config.resolved", std::ios::trunc);
    require(static_cast<bool>(f), ErrorCode::io, "cannot write " + run_dir + "/config.resolved");
    f << format_config(config);
  }
  const std::string csv_path = (fs::path(run_dir) / "metrics.csv").string();
  std::ofstream csv(csv_path, std::ios::trunc);
  require(static_cast<bool>(csv), ErrorCode::io, "cannot write " + csv_path);
  csv << metrics_csv_header() << std::flush;

  ExperimentReport report;
  if (config.total_env_steps == 0) return report;

  TrainConfig cfg = config;
  Trainer trainer(cfg);
  trainer.set_dump_dir((fs::path(run_dir) / "nan_dump").string());
  while (trainer.env_steps() < config.total_env_steps) {
    const bool last_round =
        trainer.env_steps() + config.trajectories_per_round * config.env.horizon >= config.total_env_steps;
    IterationMetrics m = trainer.iterate();
    // The closing iteration always evaluates.
    if (last_round && std::isnan(m.coverage) && std::isnan(m.goal_staying_frac))
      evaluate_snapshot(config, AgentView{trainer.repr(), trainer.policy(), trainer.normalizer(), config.skill_mode},
                    m.iteration, m);
    csv << metrics_csv_row(m) << std::flush;
    if (callbacks.on_iteration) callbacks.on_iteration(m);
    if (config.checkpoint_every > 0 && m.iteration % config.checkpoint_every == 0)
      trainer.save((fs::path(run_dir) / "checkpoints" / ("iter_" + std::to_string(m.iteration) + ".skf")).string());
    report.last = m;
    ++report.iterations;
  }
  report.env_steps = trainer.env_steps();
  report.final_coverage = report.last.coverage;
  report.final_goal_staying = report.last.goal_staying_frac;
  trainer.save((fs::path(run_dir) / "checkpoints" / "final.skf").string());

  std::vector<TransitionRecord> sample;
  Rng pick(config.seed ^ hash_name("buffer_sample"));
  const std::size_t n = std::min<std::size_t>(10000, trainer.buffer().size());
  for (auto i : trainer.buffer().sample_indices(n, pick)) sample.push_back(trainer.buffer().record(i));
  write_transitions_jsonl((fs::path(run_dir) / "buffer_sample.jsonl").string(), sample);
  return report;
}

}  // namespace csf
