#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace csf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    fail(ErrorCode::config, "config key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    fail(ErrorCode::config, "config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorCode::config, "config key '" + key + "': expected true or false, got '" + v + "'");
}

SkillMode to_skill_mode(const std::string& key, const std::string& v) {
  if (v == "continuous") return SkillMode::continuous;
  if (v == "one_hot") return SkillMode::one_hot;
  fail(ErrorCode::config, "config key '" + key + "': unknown skill mode '" + v + "'");
}

struct Field {
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define CSF_NUM(k, member)                                                              \
  Field {                                                                               \
    k, [](TrainConfig& c, const std::string& v) { c.member = to_double(k, v); },        \
        [](const TrainConfig& c) { return fmt(c.member); }                              \
  }
#define CSF_UINT(k, member)                                                             \
  Field {                                                                               \
    k, [](TrainConfig& c, const std::string& v) { c.member = to_uint(k, v); },          \
        [](const TrainConfig& c) { return std::to_string(c.member); }                   \
  }
#define CSF_BOOL(k, member)                                                             \
  Field {                                                                               \
    k, [](TrainConfig& c, const std::string& v) { c.member = to_bool(k, v); },          \
        [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); }  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"config_version",
       [](TrainConfig&, const std::string& v) {
         if (to_uint("config_version", v) != kConfigVersion)
           fail(ErrorCode::config, "config key 'config_version': unsupported version " + v);
       },
       [](const TrainConfig&) { return std::to_string(kConfigVersion); }},
      {"env.name", [](TrainConfig& c, const std::string& v) { c.env.kind = parse_env_kind(v); },
       [](const TrainConfig& c) { return env_kind_name(c.env.kind); }},
      CSF_UINT("env.horizon", env.horizon),
      CSF_NUM("env.dt", env.dt),
      CSF_NUM("env.damping", env.damping),
      CSF_NUM("env.action_clamp", env.action_clamp),
      CSF_NUM("env.reset_noise", env.reset_noise),
      CSF_NUM("env.bounds", env.bounds),
      CSF_UINT("env.chain_states", env.chain_states),
      CSF_UINT("skill.dim", skill_dim),
      {"skill.mode", [](TrainConfig& c, const std::string& v) { c.skill_mode = to_skill_mode("skill.mode", v); },
       [](const TrainConfig& c) {
         return std::string(c.skill_mode == SkillMode::continuous ? "continuous" : "one_hot");
       }},
      {"repr.objective", [](TrainConfig& c, const std::string& v) { c.objective = parse_repr_objective(v); },
       [](const TrainConfig& c) { return repr_objective_name(c.objective); }},
      {"repr.critic", [](TrainConfig& c, const std::string& v) { c.critic = parse_critic_kind(v); },
       [](const TrainConfig& c) { return critic_kind_name(c.critic); }},
      CSF_NUM("repr.xi", xi),
      CSF_UINT("repr.negatives", negatives),
      CSF_BOOL("repr.in_batch_negatives", in_batch_negatives),
      CSF_NUM("repr.dual_lr", dual_lr),
      CSF_NUM("repr.dual_init", dual_init),
      CSF_NUM("repr.dual_slack", dual_slack),
      {"reward.mode", [](TrainConfig& c, const std::string& v) { c.reward_mode = parse_reward_mode(v); },
       [](const TrainConfig& c) { return reward_mode_name(c.reward_mode); }},
      {"reward.mi_scale",
       [](TrainConfig& c, const std::string& v) {
         require(v == "xi" || v == "unit", ErrorCode::config, "config key 'reward.mi_scale': expected xi or unit, got '" + v + "'");
         c.mi_scale_xi = v == "xi";
       },
       [](const TrainConfig& c) { return std::string(c.mi_scale_xi ? "xi" : "unit"); }},
      CSF_NUM("sf.gamma", gamma),
      CSF_NUM("sf.tau", tau),
      CSF_UINT("net.hidden_dim", hidden_dim),
      CSF_UINT("net.hidden_layers", hidden_layers),
      CSF_NUM("train.lr", lr),
      CSF_UINT("train.batch_size", batch_size),
      CSF_UINT("train.updates_per_round", updates_per_round),
      CSF_UINT("train.trajectories_per_round", trajectories_per_round),
      CSF_UINT("train.total_env_steps", total_env_steps),
      CSF_UINT("train.warmup_rounds", warmup_rounds),
      CSF_UINT("train.buffer_capacity", buffer_capacity),
      CSF_UINT("train.seed", seed),
      CSF_NUM("train.grad_clip", grad_clip),
      CSF_NUM("policy.init_alpha", init_alpha),
      CSF_NUM("policy.alpha_lr", alpha_lr),
      {"policy.target_entropy",
       [](TrainConfig& c, const std::string& v) {
         if (v == "auto") {
           c.target_entropy_set = false;
           return;
         }
         c.target_entropy = to_double("policy.target_entropy", v);
         c.target_entropy_set = true;
       },
       [](const TrainConfig& c) { return c.target_entropy_set ? fmt(c.target_entropy) : std::string("auto"); }},
      CSF_UINT("eval.every", eval_every),
      CSF_UINT("eval.n_skills", eval_skills),
      CSF_UINT("eval.n_goals", eval_goals),
      CSF_NUM("eval.goal_range", eval_goal_range),
      CSF_NUM("eval.radius", eval_radius),
      CSF_UINT("eval.reinference_period", eval_reinference_period),
      CSF_NUM("eval.cell_size", eval_cell_size),
      CSF_UINT("checkpoint.every", checkpoint_every),
      CSF_BOOL("log.wall_time", log_wall_time),
  };
  return f;
}

#undef CSF_NUM
#undef CSF_UINT
#undef CSF_BOOL

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  fail(ErrorCode::config, "unknown config key '" + key + "'");
}

}  // namespace

double TrainConfig::resolved_target_entropy() const {
  return target_entropy_set ? target_entropy : -static_cast<double>(env.action_dim());
}

void TrainConfig::validate() const {
  auto check = [](bool ok, const char* key, const std::string& why) {
    if (!ok) fail(ErrorCode::config, std::string("config key '") + key + "': " + why);
  };
  try {
    env.validate();
  } catch (const Error& e) {
    fail(ErrorCode::config, std::string("env: ") + e.what());
  }
  check(skill_dim >= 1, "skill.dim", "must be >= 1");
  check(skill_mode == SkillMode::one_hot || skill_dim >= 2, "skill.dim", "continuous skills need d >= 2");
  check(xi > 0.0, "repr.xi", "must be positive");
  check(negatives >= 2, "repr.negatives", "need at least 2 negatives");
  check(dual_lr >= 0.0, "repr.dual_lr", "must be non-negative");
  check(dual_init >= 0.0, "repr.dual_init", "must be non-negative");
  check(objective == ReprObjective::csf || critic_uses_skill(critic), "repr.critic",
        "the dual objective needs a skill-dependent critic");
  check(gamma > 0.0 && gamma < 1.0, "sf.gamma", "must lie in (0, 1)");
  check(tau > 0.0 && tau <= 1.0, "sf.tau", "must lie in (0, 1]");
  check(hidden_dim >= 1, "net.hidden_dim", "must be >= 1");
  check(lr >= 0.0, "train.lr", "must be non-negative");
  check(batch_size >= 2, "train.batch_size", "must be >= 2");
  check(trajectories_per_round >= 1, "train.trajectories_per_round", "must be >= 1");
  check(buffer_capacity >= batch_size, "train.buffer_capacity", "must hold at least one batch");
  check(grad_clip > 0.0, "train.grad_clip", "must be positive");
  check(init_alpha > 0.0, "policy.init_alpha", "must be positive");
  check(alpha_lr >= 0.0, "policy.alpha_lr", "must be non-negative");
  check(eval_skills >= 1, "eval.n_skills", "must be >= 1");
  check(eval_radius > 0.0, "eval.radius", "must be positive");
  check(eval_reinference_period >= 1, "eval.reinference_period", "must be >= 1");
  check(eval_cell_size > 0.0, "eval.cell_size", "must be positive");
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  find_field(key).set(config, trim(value));
}

std::string get_config_value(const TrainConfig& config, const std::string& key) {
  return find_field(key).get(config);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  bool versioned = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::config, "config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    set_config_value(c, key, line.substr(eq + 1));
    if (key == "config_version") versioned = true;
  }
  if (!versioned) fail(ErrorCode::config, "config key 'config_version' is missing");
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::config, "cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace csf
