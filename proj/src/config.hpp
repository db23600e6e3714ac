#pragma once

// Experiment configuration and its text form: one "key = value" per line,
// '#' starts a comment, and the file must declare "config_version = 1".

#include <cstdint>
#include <string>
#include <vector>

#include "envs.hpp"
#include "hypersphere.hpp"
#include "repr.hpp"

namespace csf {

inline constexpr int kConfigVersion = 1;

struct TrainConfig {
  EnvSpec env;

  std::size_t skill_dim = 2;
  SkillMode skill_mode = SkillMode::continuous;

  ReprObjective objective = ReprObjective::csf;
  CriticKind critic = CriticKind::inner_product;
  double xi = 5.0;
  std::size_t negatives = 256;
  bool in_batch_negatives = false;
  double dual_lr = 1e-4;
  double dual_init = 30.0;
  double dual_slack = 1e-3;

  RewardMode reward_mode = RewardMode::csf;
  /// Weight of the anti-exploration term in mi_only rewards: xi, matching
  /// the representation objective, or 1.
  bool mi_scale_xi = true;

  double gamma = 0.99;
  double tau = 5e-3;

  std::size_t hidden_dim = 1024;
  std::size_t hidden_layers = 2;

  double lr = 1e-4;
  std::size_t batch_size = 256;
  std::size_t updates_per_round = 50;
  std::size_t trajectories_per_round = 8;
  std::size_t total_env_steps = 200000;
  std::size_t warmup_rounds = 10;
  std::size_t buffer_capacity = 1000000;
  std::uint64_t seed = 1;
  double grad_clip = 10.0;

  double init_alpha = 0.1;
  double alpha_lr = 1e-4;
  /// Defaults to minus the action dimension when left unset.
  bool target_entropy_set = false;
  double target_entropy = 0.0;

  std::size_t eval_every = 25;
  std::size_t eval_skills = 48;
  std::size_t eval_goals = 50;
  double eval_goal_range = 10.0;
  double eval_radius = 1.0;
  std::size_t eval_reinference_period = 25;
  double eval_cell_size = 1.0;

  std::size_t checkpoint_every = 0;
  bool log_wall_time = false;

  double resolved_target_entropy() const;
  double anti_exploration_weight() const { return mi_scale_xi ? xi : 1.0; }
  /// Throws ErrorCode::config naming the offending key.
  void validate() const;
};

/// Sets one key from its text value. Unknown keys and malformed values throw
/// ErrorCode::config with the key in the message.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const TrainConfig& config, const std::string& key);
std::vector<std::string> config_keys();

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);
/// Every key with its resolved value, in a fixed order; parse_config of the
/// result reproduces the configuration.
std::string format_config(const TrainConfig& config);

}  // namespace csf
