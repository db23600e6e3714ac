#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "config.hpp"

using namespace csf;

namespace {

std::string code_and_message(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return std::string(error_code_name(e.code())) + ": " + e.what();
  }
  return "ok";
}

}  // namespace

TEST_CASE("defaults") {
  const TrainConfig c;
  CHECK(c.xi == 5.0);
  CHECK(c.negatives == 256);
  CHECK(c.batch_size == 256);
  CHECK(c.updates_per_round == 50);
  CHECK(c.trajectories_per_round == 8);
  CHECK(c.gamma == 0.99);
  CHECK(c.tau == 5e-3);
  CHECK(c.buffer_capacity == 1000000);
  CHECK(c.warmup_rounds == 10);
  CHECK(c.eval_every == 25);
  CHECK(c.eval_reinference_period == 25);
  CHECK(c.resolved_target_entropy() == -2.0);
  CHECK(c.anti_exploration_weight() == 5.0);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("parse and format round trip") {
  TrainConfig c = parse_config(
      "config_version = 1\n"
      "# a comment\n"
      "env.name = grid_room   # trailing comment\n"
      "skill.dim = 3\n"
      "repr.objective = metra_dual\n"
      "reward.mode = mi_only\n"
      "train.lr = 0.000123456789\n"
      "policy.target_entropy = -1.5\n"
      "repr.in_batch_negatives = true\n"
      "reward.mi_scale = unit\n");
  CHECK(c.env.kind == EnvKind::grid_room);
  CHECK(c.skill_dim == 3);
  CHECK(c.objective == ReprObjective::metra_dual);
  CHECK(c.reward_mode == RewardMode::mi_only);
  CHECK(c.lr == 0.000123456789);
  CHECK(c.resolved_target_entropy() == -1.5);
  CHECK(c.in_batch_negatives);
  CHECK(c.anti_exploration_weight() == 1.0);

  const std::string text = format_config(c);
  const TrainConfig back = parse_config(text);
  CHECK(format_config(back) == text);
  CHECK(back.lr == c.lr);
  for (const auto& key : config_keys()) CHECK(get_config_value(back, key) == get_config_value(c, key));
}

TEST_CASE("errors name the key") {
  CHECK(code_and_message("env.name = point_mass_2d\n").find("config_version") != std::string::npos);
  CHECK(code_and_message("config_version = 2\n").find("unsupported version") != std::string::npos);
  const std::string unknown = code_and_message("config_version = 1\nrepr.zeta = 3\n");
  CHECK(unknown.rfind("config", 0) == 0);
  CHECK(unknown.find("repr.zeta") != std::string::npos);
  CHECK(code_and_message("config_version = 1\ntrain.batch_size = many\n").find("train.batch_size") !=
        std::string::npos);
  CHECK(code_and_message("config_version = 1\nsf.gamma = 1\n").find("sf.gamma") != std::string::npos);
  CHECK(code_and_message("config_version = 1\nskill.dim = 1\n").find("skill.dim") != std::string::npos);
  CHECK(code_and_message("config_version = 1\nrepr.negatives = 1\n").find("repr.negatives") != std::string::npos);
  CHECK(code_and_message("config_version = 1\nreward.mi_scale = half\n").find("reward.mi_scale") != std::string::npos);
  CHECK(code_and_message("config_version = 1\njust words\n").find("line 2") != std::string::npos);
  CHECK(code_and_message("config_version = 1\nrepr.objective = metra_dual\nrepr.critic = gaussian_kernel\n")
            .find("repr.critic") != std::string::npos);
}

TEST_CASE("one-hot skills may use d = 1") {
  CHECK_NOTHROW(parse_config("config_version = 1\nskill.mode = one_hot\nskill.dim = 1\n"));
}

TEST_CASE("loading from disk") {
  CHECK_THROWS_WITH_AS(load_config("/nonexistent/run.cfg"), doctest::Contains("/nonexistent/run.cfg"), Error);
  const auto path = std::filesystem::temp_directory_path() / "csf_test_config.cfg";
  {
    std::ofstream f(path);
    f << "config_version = 1\ntrain.seed = 42\n";
  }
  CHECK(load_config(path.string()).seed == 42);
  std::filesystem::remove(path);
}
