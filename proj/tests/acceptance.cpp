// Acceptance run: the oracle self-test plus the two point-mass experiments,
// one PASS/FAIL line per criterion. Uses only the public C interface.
//
//   acceptance <point_mass.cfg> <work dir> [--skip-experiments]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "csf/csf.h"

namespace fs = std::filesystem;

namespace {

// Random-action coverage, 48 skills x 200 steps, cell 1.0, seed 1; measured
// once and frozen.
constexpr double kFrozenBaseline = 108.0;

int failures = 0;

void line(int id, bool pass, const std::string& text) {
  std::printf("%s [%d] %s\n", pass ? "PASS" : "FAIL", id, text.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

bool ok(csf_status s, const char* what) {
  if (s == CSF_OK) return true;
  std::printf("ERROR %s: %s: %s\n", what, csf_status_name(s), csf_last_error());
  std::fflush(stdout);
  return false;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void on_check(const csf_check_result* r, void*) {
  std::printf("%s\n", r->line);
  std::fflush(stdout);
  if (!r->passed) ++failures;
}

struct Config {
  csf_config* p = nullptr;
  Config() = default;
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;
  ~Config() { csf_config_free(p); }
};

bool clone_with(const csf_config* base, std::map<std::string, std::string> sets, Config& out) {
  if (!ok(csf_config_clone(base, &out.p), "clone config")) return false;
  for (const auto& [k, v] : sets)
    if (!ok(csf_config_set(out.p, k.c_str(), v.c_str()), k.c_str())) return false;
  return true;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <point_mass.cfg> <work dir> [--skip-experiments]\n");
    return 2;
  }
  const std::string cfg_path = argv[1];
  const fs::path work = argv[2];
  const bool skip = argc > 3 && std::strcmp(argv[3], "--skip-experiments") == 0;
  fs::create_directories(work);

  int selftest_failures = 0;
  if (!ok(csf_selftest((work / "selftest").c_str(), on_check, nullptr, &selftest_failures), "selftest")) ++failures;

  if (skip) {
    std::printf("SKIP [8] [9] experiments\n");
    return failures ? 1 : 0;
  }

  Config base;
  if (!ok(csf_config_load(cfg_path.c_str(), &base.p), "load config")) return 1;

  // ---- 8: CSF vs the frozen random baseline and the mi_only ablation ----
  const auto t8 = std::chrono::steady_clock::now();
  uint64_t baseline_now = 0;
  if (!ok(csf_random_baseline(base.p, 1, &baseline_now), "baseline")) ++failures;
  std::printf("info: random baseline recomputed %llu, frozen %g\n", static_cast<unsigned long long>(baseline_now),
              kFrozenBaseline);

  std::map<std::string, std::vector<double>> coverage;
  for (const char* mode : {"csf", "mi_only"})
    for (int seed = 1; seed <= 5; ++seed) {
      Config c;
      if (!clone_with(base.p, {{"reward.mode", mode}, {"train.seed", std::to_string(seed)}}, c)) return 1;
      const fs::path dir = work / (std::string(mode) + "_seed" + std::to_string(seed));
      fs::remove_all(dir);
      csf_metrics last{};
      const auto t0 = std::chrono::steady_clock::now();
      if (!ok(csf_run_experiment(c.p, dir.c_str(), nullptr, nullptr, &last), "train")) {
        coverage[mode].push_back(0.0);
        continue;
      }
      coverage[mode].push_back(last.coverage);
      std::printf("info: %s seed %d final coverage %g, goal staying %s, E|dphi|^2 %s (%.0f s)\n", mode, seed,
                  last.coverage, fmt(last.goal_staying_frac).c_str(), fmt(last.e_sq_norm_dphi).c_str(),
                  seconds_since(t0));
      std::fflush(stdout);
    }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  const double csf_mean = mean(coverage["csf"]), mi_mean = mean(coverage["mi_only"]);
  const double vs_random = csf_mean / kFrozenBaseline, vs_mi = mi_mean > 0.0 ? csf_mean / mi_mean : INFINITY;
  line(8, vs_random >= 3.0 && vs_mi >= 1.5,
       "end-to-end coverage: csf mean " + fmt(csf_mean) + " = " + fmt(vs_random) + "x random baseline (>= 3), " +
           fmt(vs_mi) + "x mi_only mean " + fmt(mi_mean) + " (>= 1.5); " + fmt(seconds_since(t8)) + " s");

  // ---- 9: zero-shot goal reaching with the seed-1 CSF checkpoint ----
  const auto t9 = std::chrono::steady_clock::now();
  const fs::path trained = work / "csf_seed1" / "checkpoints" / "final.skf";
  const fs::path untrained = work / "untrained.skf";
  Config c9;
  bool ok9 = clone_with(base.p, {{"reward.mode", "csf"}, {"train.seed", "1"}}, c9);
  csf_trainer* fresh = nullptr;
  ok9 = ok9 && ok(csf_trainer_create(c9.p, &fresh), "untrained agent") &&
        ok(csf_trainer_save(fresh, untrained.c_str()), "save untrained");
  csf_trainer_free(fresh);
  csf_eval_summary trained_eval{}, untrained_eval{};
  ok9 = ok9 && ok(csf_evaluate(trained.c_str(), c9.p, 1, nullptr, (work / "eval_trained").c_str(), &trained_eval),
                  "eval trained") &&
        ok(csf_evaluate(untrained.c_str(), c9.p, 1, nullptr, (work / "eval_untrained").c_str(), &untrained_eval),
           "eval untrained");
  const double ft = trained_eval.mean_staying, fu = untrained_eval.mean_staying;
  line(9, ok9 && trained_eval.n_goals == 50 && ft >= 0.3 && ft >= 5.0 * fu,
       "zero-shot goals: trained staying fraction " + fmt(ft) + " (>= 0.3), untrained " + fmt(fu) +
           " (trained >= 5x); " + std::to_string(trained_eval.n_goals) + " goals; " + fmt(seconds_since(t9)) + " s");

  Config c25;
  csf_eval_summary period25{};
  if (ok9 && clone_with(c9.p, {{"eval.reinference_period", "25"}}, c25) &&
      ok(csf_evaluate(trained.c_str(), c25.p, 1, nullptr, (work / "eval_trained_period25").c_str(), &period25),
         "eval period 25"))
    std::printf("info: trained staying fraction with re-inference every 25 steps: %s\n",
                fmt(period25.mean_staying).c_str());

  std::printf("%s: %d failure(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
