// Command-line front end. Everything goes through the C interface.

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csf/csf.h"

extern char** environ;

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;

struct ConfigDeleter {
  void operator()(csf_config* c) const { csf_config_free(c); }
};
using ConfigPtr = std::unique_ptr<csf_config, ConfigDeleter>;

int report(csf_status s, const std::string& context) {
  std::cerr << "csf " << context << ": " << csf_status_name(s) << ": " << csf_last_error() << "\n";
  return csf_exit_code(s);
}

int usage(const std::string& msg) {
  std::cerr << "csf: " << msg << "\n";
  return kUsage;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string config_text(const csf_config* c) {
  size_t n = 0;
  csf_config_format(c, nullptr, 0, &n);
  std::string s(n, '\0');
  csf_config_format(c, s.data(), n, &n);
  s.resize(n - 1);
  return s;
}

/// Loads `path`, then applies --seed, --total-steps and key=value overrides.
std::optional<int> load_config(const std::string& path, std::optional<std::uint64_t> seed,
                               std::optional<std::uint64_t> total_steps, const std::vector<std::string>& sets,
                               ConfigPtr& out) {
  csf_config* raw = nullptr;
  if (csf_status s = csf_config_load(path.c_str(), &raw); s != CSF_OK) return report(s, "config");
  out.reset(raw);
  auto set = [&](const std::string& k, const std::string& v) -> std::optional<int> {
    if (csf_status s = csf_config_set(out.get(), k.c_str(), v.c_str()); s != CSF_OK) return report(s, "config");
    return std::nullopt;
  };
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) return usage("--set expects key=value, got '" + kv + "'");
    if (auto e = set(kv.substr(0, eq), kv.substr(eq + 1))) return e;
  }
  if (seed)
    if (auto e = set("train.seed", std::to_string(*seed))) return e;
  if (total_steps)
    if (auto e = set("train.total_env_steps", std::to_string(*total_steps))) return e;
  if (csf_status s = csf_config_validate(out.get()); s != CSF_OK) return report(s, "config");
  return std::nullopt;
}

/// The run's frozen config next to a checkpoint: <run>/checkpoints/x.skf or <run>/x.skf.
std::string config_near(const std::string& checkpoint) {
  const fs::path dir = fs::path(checkpoint).parent_path();
  for (const fs::path& p : {dir.parent_path() / "config.resolved", dir / "config.resolved"})
    if (fs::exists(p)) return p.string();
  return (dir.parent_path() / "config.resolved").string();
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed, total_steps;
  std::vector<std::string> sets;
  bool force = false, quiet = false;
};

void on_progress(const csf_metrics* m, void* user) {
  if (*static_cast<bool*>(user) || std::isnan(m->coverage)) return;
  std::cout << "iter " << m->iteration << " steps " << m->env_steps << " coverage " << fmt(m->coverage) << " goal "
            << fmt(m->goal_staying_frac) << " E|dphi|^2 " << fmt(m->e_sq_norm_dphi) << " alpha " << fmt(m->alpha)
            << std::endl;
}

int cmd_train(const TrainArgs& a) {
  ConfigPtr cfg;
  if (auto e = load_config(a.config, a.seed, a.total_steps, a.sets, cfg)) return *e;
  const fs::path out(a.out);
  if (fs::exists(out / "metrics.csv")) {
    if (!a.force) return usage((out / "metrics.csv").string() + " exists; pass --force to overwrite");
    for (const char* name : {"metrics.csv", "config.resolved", "buffer_sample.jsonl", "checkpoints", "nan_dump"})
      fs::remove_all(out / name);
  }
  bool quiet = a.quiet;
  csf_metrics last{};
  if (csf_status s = csf_run_experiment(cfg.get(), a.out.c_str(), on_progress, &quiet, &last); s != CSF_OK)
    return report(s, "train");
  if (!a.quiet)
    std::cout << "done: " << last.iteration << " iterations, " << last.env_steps << " env steps, final coverage "
              << fmt(last.coverage) << ", goal staying " << fmt(last.goal_staying_frac) << "\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, out, config, goals_file;
  std::optional<std::uint64_t> seed;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::exists(a.checkpoint)) return usage("checkpoint " + a.checkpoint + " not found");
  ConfigPtr cfg;
  if (auto e = load_config(a.config.empty() ? config_near(a.checkpoint) : a.config, std::nullopt, std::nullopt, {},
                           cfg))
    return *e;
  std::uint64_t seed = 0;
  if (a.seed) {
    seed = *a.seed;
  } else {
    char buf[32];
    size_t n = 0;
    csf_config_get(cfg.get(), "train.seed", buf, sizeof buf, &n);
    seed = std::stoull(buf);
  }
  csf_eval_summary sum{};
  if (csf_status s = csf_evaluate(a.checkpoint.c_str(), cfg.get(), seed,
                                  a.goals_file.empty() ? nullptr : a.goals_file.c_str(), a.out.c_str(), &sum);
      s != CSF_OK)
    return report(s, "eval");
  std::cout << "coverage " << sum.coverage << " (random baseline " << sum.random_baseline << "), mean staying "
            << fmt(sum.mean_staying) << " over " << sum.n_goals << " goals -> " << (fs::path(a.out) / "eval.json").string()
            << "\n";
  return kOk;
}

struct DiagnoseArgs {
  std::string checkpoint, buffer, out, config;
  bool raw = false;
};

int cmd_diagnose(const DiagnoseArgs& a) {
  if (a.raw == !a.checkpoint.empty()) return usage("diagnose needs exactly one of --checkpoint or --raw");
  ConfigPtr cfg;
  if (!a.raw) {
    if (!fs::exists(a.checkpoint)) return usage("checkpoint " + a.checkpoint + " not found");
    if (auto e = load_config(a.config.empty() ? config_near(a.checkpoint) : a.config, std::nullopt, std::nullopt, {},
                             cfg))
      return *e;
  }
  csf_diag_summary d{};
  if (csf_status s = csf_diagnose(a.raw ? nullptr : a.checkpoint.c_str(), cfg.get(), a.buffer.c_str(), a.out.c_str(), &d);
      s != CSF_OK)
    return report(s, "diagnose");
  std::cout << "n " << d.n << ", E|dphi|^2 " << fmt(d.mean_sq_norm) << ", log-partition slope " << fmt(d.slope)
            << ", Rbar " << fmt(d.mean_resultant_length) << ", isotropic " << (d.isotropic ? "yes" : "no")
            << ", uniform " << (d.uniform ? "yes" : "no") << " -> " << (fs::path(a.out) / "diagnostics.json").string()
            << "\n";
  return kOk;
}

struct AblateArgs {
  std::string sweep, out;
  std::size_t parallel = 1;
  bool force = false;
};

struct PendingRun {
  std::string variant;
  std::uint64_t seed = 0;
  fs::path dir;
  int exit_code = 0;
};

int spawn_train(const PendingRun& r, pid_t* pid) {
  const std::string self = fs::read_symlink("/proc/self/exe").string();
  std::vector<std::string> args{self,  "train", "--config", (r.dir / "sweep.cfg").string(), "--out", r.dir.string(),
                                "--force", "--quiet"};
  std::vector<char*> argv;
  for (auto& s : args) argv.push_back(s.data());
  argv.push_back(nullptr);
  return posix_spawn(pid, self.c_str(), nullptr, nullptr, argv.data(), environ);
}

int cmd_ablate(const AblateArgs& a) {
  if (a.parallel < 1) return usage("--parallel must be >= 1");
  csf_sweep* raw = nullptr;
  if (csf_status s = csf_sweep_load(a.sweep.c_str(), &raw); s != CSF_OK) return report(s, "ablate");
  std::unique_ptr<csf_sweep, void (*)(csf_sweep*)> sweep(raw, csf_sweep_free);
  const fs::path out(a.out);
  if (fs::exists(out / "ablation_summary.csv") && !a.force)
    return usage((out / "ablation_summary.csv").string() + " exists; pass --force to overwrite");

  size_t n_variants = 0, n_seeds = 0;
  csf_sweep_shape(sweep.get(), &n_variants, &n_seeds);
  std::vector<PendingRun> runs;
  for (size_t v = 0; v < n_variants; ++v) {
    char name[256];
    size_t need = 0;
    if (csf_status s = csf_sweep_variant_name(sweep.get(), v, name, sizeof name, &need); s != CSF_OK)
      return report(s, "ablate");
    for (size_t k = 0; k < n_seeds; ++k) {
      PendingRun r;
      r.variant = name;
      csf_sweep_seed(sweep.get(), k, &r.seed);
      r.dir = out / r.variant / ("seed_" + std::to_string(r.seed));
      csf_config* c = nullptr;
      if (csf_status s = csf_sweep_config(sweep.get(), v, k, &c); s != CSF_OK) return report(s, "ablate");
      ConfigPtr cfg(c);
      fs::create_directories(r.dir);
      std::ofstream(r.dir / "sweep.cfg") << config_text(cfg.get());
      runs.push_back(std::move(r));
    }
  }

  // Children are separate processes with disjoint run directories.
  std::map<pid_t, std::size_t> active;
  std::size_t next = 0;
  while (next < runs.size() || !active.empty()) {
    while (next < runs.size() && active.size() < a.parallel) {
      std::cout << "run " << runs[next].variant << " seed " << runs[next].seed << std::endl;
      pid_t pid = 0;
      if (spawn_train(runs[next], &pid) != 0) {
        std::cerr << "csf ablate: cannot launch " << runs[next].dir << "\n";
        runs[next].exit_code = 1;
      } else {
        active[pid] = next;
      }
      ++next;
    }
    if (active.empty()) continue;
    int status = 0;
    const pid_t done = waitpid(-1, &status, 0);
    if (done < 0) break;
    const auto it = active.find(done);
    if (it == active.end()) continue;
    PendingRun& r = runs[it->second];
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 1;
    if (r.exit_code != 0)
      std::cerr << "csf ablate: " << r.variant << " seed " << r.seed << " failed with exit " << r.exit_code << "\n";
    active.erase(it);
  }

  std::vector<csf_run_result> results;
  int worst = 0;
  for (const auto& r : runs) {
    csf_run_result res{r.variant.c_str(), r.seed, 0, NAN, NAN};
    if (r.exit_code == 0 && csf_read_run_result(r.dir.c_str(), &res) != CSF_OK) res.ok = 0;
    res.variant = r.variant.c_str();
    res.seed = r.seed;
    if (!res.ok) worst = std::max(worst, r.exit_code == 3 ? 3 : 2);
    results.push_back(res);
  }
  const std::string summary = (out / "ablation_summary.csv").string();
  if (csf_status s = csf_write_ablation_summary(results.data(), results.size(), summary.c_str()); s != CSF_OK)
    return report(s, "ablate");
  std::ifstream f(summary);
  std::cout << f.rdbuf();
  return worst;
}

void on_check(const csf_check_result* r, void*) { std::cout << r->line << std::endl; }

int cmd_selftest(const std::string& scratch) {
  int failures = 0;
  if (csf_status s = csf_selftest(scratch.c_str(), on_check, nullptr, &failures); s != CSF_OK)
    return report(s, "selftest");
  std::cout << (failures ? std::to_string(failures) + " check(s) failed" : "all checks passed") << "\n";
  return failures ? 1 : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive successor-feature skill discovery"};
  app.require_subcommand(1);
  app.set_version_flag("--version", csf_version());

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train an agent from a config file");
  t->add_option("-c,--config", train.config, "config file")->required();
  t->add_option("-o,--out", train.out, "run directory")->required();
  t->add_option("--seed", train.seed, "override train.seed");
  t->add_option("--total-steps", train.total_steps, "override train.total_env_steps");
  t->add_option("--set", train.sets, "extra key=value overrides");
  t->add_flag("--force", train.force, "overwrite an existing run");
  t->add_flag("-q,--quiet", train.quiet, "no progress output");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "coverage and zero-shot goal reaching of a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  e->add_option("-o,--out", eval.out, "output directory")->required();
  e->add_option("-c,--config", eval.config, "config (default: the run's config.resolved)");
  e->add_option("--seed", eval.seed, "evaluation seed (default: train.seed)");
  e->add_option("--goals-file", eval.goals_file, "JSON list of goals replacing the sampled ones");

  DiagnoseArgs diag;
  auto* d = app.add_subcommand("diagnose", "representation diagnostics over a transition dump");
  d->add_option("--checkpoint", diag.checkpoint, "checkpoint file");
  d->add_option("--buffer", diag.buffer, "transitions JSONL")->required();
  d->add_option("-o,--out", diag.out, "output directory")->required();
  d->add_option("-c,--config", diag.config, "config (default: the run's config.resolved)");
  d->add_flag("--raw", diag.raw, "take next_obs - obs as the representation difference");

  AblateArgs ablate;
  auto* a = app.add_subcommand("ablate", "run a sweep of config variants over seeds");
  a->add_option("--sweep", ablate.sweep, "sweep file")->required();
  a->add_option("-o,--out", ablate.out, "output directory")->required();
  a->add_option("--parallel", ablate.parallel, "concurrent runs (default 1)");
  a->add_flag("--force", ablate.force, "overwrite an existing summary");

  std::string scratch = (fs::temp_directory_path() / "csf_selftest").string();
  auto* s = app.add_subcommand("selftest", "run the built-in oracle checks");
  s->add_option("--scratch", scratch, "scratch directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kUsage;
  }

  try {
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(eval);
    if (*d) return cmd_diagnose(diag);
    if (*a) return cmd_ablate(ablate);
    if (*s) return cmd_selftest(scratch);
  } catch (const std::exception& ex) {
    std::cerr << "csf: " << ex.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
