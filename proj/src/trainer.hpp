#pragma once

// The training loop: collection rounds into a replay buffer, then
// interleaved updates of phi, psi and pi, with checkpointing of the whole
// state.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "config.hpp"
#include "envs.hpp"
#include "evalsuite.hpp"
#include "repr.hpp"
#include "sf_policy.hpp"

namespace csf {

/// Flat ring storage of transitions. Observations are stored raw; no rewards.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t action_dim, std::size_t skill_dim);

  void add(std::span<const double> obs, std::span<const double> action, std::span<const double> next_obs,
           std::span<const double> z, std::uint64_t episode, std::uint64_t t);

  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t obs_dim() const noexcept { return obs_dim_; }
  std::size_t action_dim() const noexcept { return action_dim_; }
  std::size_t skill_dim() const noexcept { return skill_dim_; }

  /// Uniform indices in [0, size).
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

  struct Batch {
    Matrix obs, action, next_obs, z;
  };
  Batch gather(std::span<const std::size_t> idx) const;
  TransitionRecord record(std::size_t i) const;

  /// FNV-1a over the stored bytes, for equality checks.
  std::uint64_t checksum() const;

  void to_arrays(ParamSet& out, const std::string& prefix) const;
  static ReplayBuffer from_arrays(const ParamSet& in, const std::string& prefix);

 private:
  std::size_t capacity_ = 0, obs_dim_ = 0, action_dim_ = 0, skill_dim_ = 0;
  std::size_t size_ = 0, cursor_ = 0;
  std::vector<double> obs_, action_, next_obs_, z_, episode_, t_;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct IterationMetrics {
  std::size_t iteration = 0;
  std::size_t env_steps = 0;
  double loss_repr = kMissing;
  double loss_sf = kMissing;
  double loss_actor = kMissing;
  double alpha = kMissing;
  double mean_reward = kMissing;
  double e_sq_norm_dphi = kMissing;
  double coverage = kMissing;
  double goal_staying_frac = kMissing;
  double wall_s = 0.0;
  double lambda = kMissing;
  std::size_t buffer_size = 0;
};

std::string metrics_csv_header();
/// Missing values are written as empty fields.
std::string metrics_csv_row(const IterationMetrics& m);

struct RoundStats {
  std::size_t transitions = 0;
  std::size_t episodes = 0;
};

struct UpdateStats {
  double loss_repr = 0.0, loss_sf = 0.0, loss_actor = 0.0;
  double mean_reward = 0.0, e_sq_norm = 0.0, mean_log_prob = 0.0;
};

class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  /// One collection round, then updates_per_round gradient steps once the
  /// warmup rounds are done. Periodic evaluation fills coverage and
  /// goal_staying_frac.
  IterationMetrics iterate();

  RoundStats collect_round();
  UpdateStats update();

  /// Directory for a diagnostic dump if a loss turns non-finite.
  void set_dump_dir(std::string dir) { dump_dir_ = std::move(dir); }

  void save(const std::string& path) const;
  /// Refuses files whose dimensions disagree with `config`.
  static Trainer load(const std::string& path, TrainConfig config);

  const TrainConfig& config() const noexcept { return config_; }
  const ReprNet& repr() const noexcept { return repr_; }
  const ParamSet& successor() const noexcept { return psi_; }
  const ParamSet& successor_target() const noexcept { return psi_target_; }
  const ParamSet& policy() const noexcept { return pi_; }
  const StateNormalizer& normalizer() const noexcept { return norm_; }
  const ReplayBuffer& buffer() const noexcept { return buffer_; }
  double alpha() const { return entropy_.alpha(); }
  double lambda() const noexcept { return dual_.lambda; }
  std::size_t iteration() const noexcept { return iteration_; }
  std::size_t env_steps() const noexcept { return env_steps_; }
  Rng& rng() noexcept { return rng_; }

  /// Frozen-snapshot encodings used by evaluation.
  Matrix normalize(const Matrix& obs) const { return norm_.normalize(obs); }

 private:
  Trainer() = default;
  ParamSet to_arrays() const;
  [[noreturn]] void halt(const std::string& what, const ReplayBuffer::Batch& batch) const;

  TrainConfig config_;
  ReprNet repr_;
  ParamSet psi_, psi_target_, pi_;
  AdamState repr_adam_, psi_adam_, pi_adam_;
  EntropyTuner entropy_;
  DualVariable dual_;
  StateNormalizer norm_;
  ReplayBuffer buffer_;
  Rng rng_;
  std::size_t iteration_ = 0, env_steps_ = 0, episodes_ = 0;
  std::string dump_dir_;
};

/// Fills coverage and goal_staying_frac from deterministic rollouts whose
/// random stream depends only on (seed, iteration). No-op on the chain.
void evaluate_snapshot(const TrainConfig& config, const AgentView& agent, std::size_t iteration,
                       IterationMetrics& m);

struct ExperimentReport {
  std::size_t iterations = 0;
  std::size_t env_steps = 0;
  IterationMetrics last;
  /// Metrics of the final evaluation; missing if no iteration ran.
  double final_coverage = kMissing;
  double final_goal_staying = kMissing;
};

struct ExperimentCallbacks {
  std::function<void(const IterationMetrics&)> on_iteration;
};

/// Runs until total_env_steps, writing metrics.csv, config.resolved,
/// checkpoints/final.skf and buffer_sample.jsonl under `run_dir`. An
/// evaluation always closes the run.
ExperimentReport run_experiment(const TrainConfig& config, const std::string& run_dir,
                                const ExperimentCallbacks& callbacks = {});

}  // namespace csf
