#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "trainer.hpp"

using namespace csf;
namespace fs = std::filesystem;

namespace {

// Small enough that a handful of iterations run in well under a second.
TrainConfig tiny_config() {
  TrainConfig c;
  c.hidden_dim = 16;
  c.batch_size = 32;
  c.negatives = 16;
  c.updates_per_round = 3;
  c.trajectories_per_round = 2;
  c.env.horizon = 20;
  c.warmup_rounds = 1;
  c.total_env_steps = 200;
  c.eval_every = 2;
  c.eval_skills = 4;
  c.eval_goals = 2;
  c.lr = 1e-3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("csf_test_trainer_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> csv_rows(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(f, line)) rows.push_back(line);
  return rows;
}

std::string csv_field(const std::string& row, std::size_t k) {
  std::stringstream ss(row);
  std::string field;
  for (std::size_t i = 0; i <= k; ++i) std::getline(ss, field, ',');
  return field;
}

}  // namespace

TEST_CASE("collection rounds") {
  TrainConfig c;
  c.hidden_dim = 16;
  Trainer t(c);
  const RoundStats r = t.collect_round();
  CHECK(r.transitions == 1600);
  CHECK(r.episodes == 8);
  CHECK(t.buffer().size() == 1600);
  CHECK(t.env_steps() == 1600);
  CHECK(t.normalizer().count() == 1608);

  // Every transition of an episode carries the episode's skill.
  for (std::size_t i = 0; i < t.buffer().size(); ++i) {
    const TransitionRecord rec = t.buffer().record(i);
    const TransitionRecord first = t.buffer().record(rec.episode_id * 200);
    CHECK(rec.z == first.z);
    CHECK(rec.t == i % 200);
  }
  // Consecutive transitions chain together within an episode.
  for (std::size_t i = 1; i < 200; ++i) CHECK(t.buffer().record(i).obs == t.buffer().record(i - 1).next_obs);

  Trainer again(c);
  again.collect_round();
  CHECK(again.buffer().checksum() == t.buffer().checksum());
  TrainConfig other = c;
  other.seed = 2;
  Trainer different(other);
  different.collect_round();
  CHECK(different.buffer().checksum() != t.buffer().checksum());
}

TEST_CASE("replay buffer") {
  ReplayBuffer b(3, 1, 1, 2);
  const std::vector<double> z{1, 0};
  for (int k = 0; k < 5; ++k) {
    const std::vector<double> o{double(k)}, a{0.5}, n{double(k + 1)};
    b.add(o, a, n, z, 0, k);
  }
  CHECK(b.size() == 3);
  std::vector<double> kept;
  for (std::size_t i = 0; i < 3; ++i) kept.push_back(b.record(i).obs[0]);
  std::sort(kept.begin(), kept.end());
  CHECK(kept == std::vector<double>{2, 3, 4});
  CHECK_THROWS_AS(b.add(std::vector<double>{1, 2}, std::vector<double>{0}, std::vector<double>{1}, z, 0, 0), Error);
  Rng rng(1);
  CHECK_THROWS_AS(ReplayBuffer(3, 1, 1, 2).sample_indices(1, rng), Error);

  ParamSet arrays;
  b.to_arrays(arrays, "buffer");
  const ReplayBuffer back = ReplayBuffer::from_arrays(arrays, "buffer");
  CHECK(back.checksum() == b.checksum());
}

TEST_CASE("uniform sampling over a frozen buffer") {
  const std::size_t n = 50;
  ReplayBuffer b(n, 1, 1, 2);
  const std::vector<double> z{0, 1}, a{0};
  for (std::size_t k = 0; k < n; ++k) {
    const std::vector<double> o{double(k)};
    b.add(o, a, o, z, 0, k);
  }
  Rng rng(11);
  std::vector<double> counts(n, 0.0);
  const std::size_t draws = 100000;
  for (auto i : b.sample_indices(draws, rng)) counts[i] += 1.0;
  const double expected = static_cast<double>(draws) / n;
  double stat = 0.0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(n - 1), stat));
  CHECK(p > 0.01);
}

TEST_CASE("warmup and update bookkeeping") {
  TrainConfig c = tiny_config();
  c.warmup_rounds = 2;
  c.eval_every = 0;
  Trainer t(c);
  const IterationMetrics m1 = t.iterate();
  CHECK(std::isnan(m1.loss_repr));
  CHECK(std::isnan(m1.coverage));
  t.iterate();
  const IterationMetrics m3 = t.iterate();
  CHECK(std::isfinite(m3.loss_repr));
  CHECK(std::isfinite(m3.loss_sf));
  CHECK(std::isfinite(m3.loss_actor));
  CHECK(std::isfinite(m3.e_sq_norm_dphi));
  CHECK(m3.env_steps == 120);
  CHECK(m3.buffer_size == 120);
  CHECK(m3.iteration == 3);
}

TEST_CASE("zero learning rates leave parameters unchanged") {
  TrainConfig c = tiny_config();
  c.lr = 0.0;
  c.alpha_lr = 0.0;
  c.dual_lr = 0.0;
  for (auto objective : {ReprObjective::csf, ReprObjective::metra_dual}) {
    c.objective = objective;
    Trainer t(c);
    const ParamSet phi = t.repr().params, psi = t.successor(), pi = t.policy();
    const double alpha = t.alpha(), lambda = t.lambda();
    IterationMetrics m;
    for (int k = 0; k < 3; ++k) m = t.iterate();
    CHECK(t.repr().params == phi);
    CHECK(t.successor() == psi);
    CHECK(t.policy() == pi);
    CHECK(t.alpha() == alpha);
    CHECK(t.lambda() == lambda);
    CHECK(std::isfinite(m.loss_repr));
    CHECK(std::isfinite(m.mean_reward));
  }
}

TEST_CASE("metrics csv") {
  CHECK(metrics_csv_header() ==
        "iteration,env_steps,loss_repr,loss_sf,loss_actor,alpha,mean_reward,e_sq_norm_dphi,coverage,"
        "goal_staying_frac,wall_s\n");
  IterationMetrics m;
  m.iteration = 3;
  m.env_steps = 4800;
  m.alpha = 0.5;
  CHECK(metrics_csv_row(m) == "3,4800,,,,0.5,,,,,0\n");
}

TEST_CASE("checkpoints") {
  const fs::path dir = scratch("ckpt");
  fs::create_directories(dir);
  TrainConfig c = tiny_config();
  Trainer t(c);
  for (int k = 0; k < 3; ++k) t.iterate();
  t.save((dir / "a.skf").string());

  SUBCASE("save, load, save is byte-identical") {
    const Trainer back = Trainer::load((dir / "a.skf").string(), c);
    back.save((dir / "b.skf").string());
    CHECK(slurp(dir / "a.skf") == slurp(dir / "b.skf"));
    CHECK(back.iteration() == 3);
    CHECK(back.buffer().checksum() == t.buffer().checksum());
  }
  SUBCASE("resume reproduces the next iterations exactly") {
    Trainer resumed = Trainer::load((dir / "a.skf").string(), c);
    for (int k = 0; k < 3; ++k) {
      const std::string expect = metrics_csv_row(t.iterate());
      CHECK(metrics_csv_row(resumed.iterate()) == expect);
    }
  }
  SUBCASE("dimension mismatch is refused") {
    TrainConfig other = c;
    other.skill_dim = 3;
    CHECK_THROWS_WITH_AS(Trainer::load((dir / "a.skf").string(), other), doctest::Contains("skill.dim"), Error);
    other = c;
    other.hidden_dim = 8;
    CHECK_THROWS_AS(Trainer::load((dir / "a.skf").string(), other), Error);
  }
  SUBCASE("corrupt magic bytes are refused") {
    std::string bytes = slurp(dir / "a.skf");
    bytes[0] = 'X';
    std::ofstream(dir / "bad.skf", std::ios::binary) << bytes;
    CHECK_THROWS_AS(Trainer::load((dir / "bad.skf").string(), c), Error);
  }
  fs::remove_all(dir);
}

TEST_CASE("experiments") {
  SUBCASE("zero total steps writes a header-only csv") {
    const fs::path dir = scratch("zero");
    TrainConfig c = tiny_config();
    c.total_env_steps = 0;
    const ExperimentReport r = run_experiment(c, dir.string());
    CHECK(r.iterations == 0);
    CHECK(slurp(dir / "metrics.csv") == metrics_csv_header());
    CHECK(parse_config(slurp(dir / "config.resolved")).total_env_steps == 0);
    fs::remove_all(dir);
  }
  SUBCASE("a fixed seed reproduces the metrics stream and artifacts") {
    const fs::path a = scratch("run_a"), b = scratch("run_b");
    TrainConfig c = tiny_config();
    c.eval_every = 3;
    std::size_t seen = 0;
    const ExperimentReport r = run_experiment(c, a.string(), {[&seen](const IterationMetrics&) { ++seen; }});
    run_experiment(c, b.string());
    CHECK(r.iterations == 5);
    CHECK(seen == 5);
    CHECK(r.env_steps == 200);
    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
    CHECK(slurp(a / "checkpoints" / "final.skf") == slurp(b / "checkpoints" / "final.skf"));
    const auto rows = csv_rows(a / "metrics.csv");
    REQUIRE(rows.size() == 6);
    // Every third iteration evaluates, and so does the last one.
    std::vector<bool> evaluated;
    for (std::size_t i = 1; i < rows.size(); ++i) evaluated.push_back(!csv_field(rows[i], 8).empty());
    CHECK(evaluated == std::vector<bool>{false, false, true, false, true});
    CHECK(std::isfinite(r.final_coverage));
    CHECK(std::isfinite(r.final_goal_staying));
    CHECK(parse_config(slurp(a / "config.resolved")).seed == c.seed);
    CHECK(read_transitions_jsonl((a / "buffer_sample.jsonl").string()).size() == 200);
    fs::remove_all(a);
    fs::remove_all(b);
  }
}
