#include "csf/csf.h"

#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "selftest.hpp"
#include "workflows.hpp"

struct csf_config {
  csf::TrainConfig value;
};

struct csf_trainer {
  std::unique_ptr<csf::Trainer> value;
};

struct csf_sweep {
  csf::SweepSpec value;
};

namespace {

thread_local std::string last_error;

csf_status to_status(csf::ErrorCode code) {
  switch (code) {
    case csf::ErrorCode::invalid_argument: return CSF_E_INVALID_ARGUMENT;
    case csf::ErrorCode::dimension: return CSF_E_DIMENSION;
    case csf::ErrorCode::config: return CSF_E_CONFIG;
    case csf::ErrorCode::io: return CSF_E_IO;
    case csf::ErrorCode::numerical: return CSF_E_NUMERICAL;
    case csf::ErrorCode::usage: return CSF_E_USAGE;
    case csf::ErrorCode::range: return CSF_E_RANGE;
    case csf::ErrorCode::domain: return CSF_E_DOMAIN;
    case csf::ErrorCode::version: return CSF_E_VERSION;
  }
  return CSF_E_INTERNAL;
}

csf_status set_error(csf_status s, const std::string& what) {
  last_error = what;
  return s;
}

template <class F>
csf_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return CSF_OK;
  } catch (const csf::Error& e) {
    return set_error(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(CSF_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(CSF_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(CSF_E_INTERNAL, "unknown failure");
  }
}

void need(const void* p, const char* what) {
  if (!p) csf::fail(csf::ErrorCode::invalid_argument, std::string(what) + " is NULL");
}

csf_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buf && cap > s.size()) {
    std::memcpy(buf, s.data(), s.size());
    buf[s.size()] = '\0';
    return CSF_OK;
  }
  if (!buf && !needed) return set_error(CSF_E_INVALID_ARGUMENT, "both buf and needed are NULL");
  if (!buf) return CSF_OK;
  return set_error(CSF_E_BUFFER_TOO_SMALL, "buffer of " + std::to_string(cap) + " bytes, need " +
                                               std::to_string(s.size() + 1));
}

csf_metrics to_c(const csf::IterationMetrics& m) {
  return {m.iteration, m.env_steps,     m.buffer_size, m.loss_repr,         m.loss_sf, m.loss_actor, m.alpha,
          m.mean_reward, m.e_sq_norm_dphi, m.coverage,    m.goal_staying_frac, m.wall_s, m.lambda};
}

}  // namespace

extern "C" {

const char* csf_last_error(void) { return last_error.c_str(); }

const char* csf_status_name(csf_status status) {
  switch (status) {
    case CSF_OK: return "ok";
    case CSF_E_INVALID_ARGUMENT: return "invalid_argument";
    case CSF_E_DIMENSION: return "dimension";
    case CSF_E_CONFIG: return "config";
    case CSF_E_IO: return "io";
    case CSF_E_NUMERICAL: return "numerical";
    case CSF_E_USAGE: return "usage";
    case CSF_E_RANGE: return "range";
    case CSF_E_DOMAIN: return "domain";
    case CSF_E_VERSION: return "version";
    case CSF_E_BUFFER_TOO_SMALL: return "buffer_too_small";
    case CSF_E_INTERNAL: return "internal";
  }
  return "unknown";
}

int csf_exit_code(csf_status status) {
  if (status == CSF_OK) return 0;
  if (status == CSF_E_NUMERICAL) return 3;
  if (status == CSF_E_INTERNAL) return 1;
  return 2;
}

const char* csf_version(void) { return "1.0.0"; }

csf_status csf_config_default(csf_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new csf_config{};
  });
}

csf_status csf_config_load(const char* path, csf_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new csf_config{csf::load_config(path)};
  });
}

csf_status csf_config_parse(const char* text, csf_config** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = new csf_config{csf::parse_config(text)};
  });
}

csf_status csf_config_clone(const csf_config* config, csf_config** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = new csf_config{config->value};
  });
}

void csf_config_free(csf_config* config) { delete config; }

csf_status csf_config_set(csf_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    csf::TrainConfig next = config->value;
    csf::set_config_value(next, key, value);
    config->value = next;
  });
}

csf_status csf_config_validate(const csf_config* config) {
  return guarded([&] {
    need(config, "config");
    config->value.validate();
  });
}

csf_status csf_config_get(const csf_config* config, const char* key, char* buf, size_t cap, size_t* needed) {
  std::string s;
  const csf_status st = guarded([&] {
    need(config, "config");
    need(key, "key");
    s = csf::get_config_value(config->value, key);
  });
  return st == CSF_OK ? copy_out(s, buf, cap, needed) : st;
}

csf_status csf_config_format(const csf_config* config, char* buf, size_t cap, size_t* needed) {
  std::string s;
  const csf_status st = guarded([&] {
    need(config, "config");
    s = csf::format_config(config->value);
  });
  return st == CSF_OK ? copy_out(s, buf, cap, needed) : st;
}

csf_status csf_trainer_create(const csf_config* config, csf_trainer** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = new csf_trainer{std::make_unique<csf::Trainer>(config->value)};
  });
}

csf_status csf_trainer_load(const char* checkpoint, const csf_config* config, csf_trainer** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(config, "config");
    need(out, "out");
    *out = new csf_trainer{std::make_unique<csf::Trainer>(csf::Trainer::load(checkpoint, config->value))};
  });
}

void csf_trainer_free(csf_trainer* trainer) { delete trainer; }

csf_status csf_trainer_iterate(csf_trainer* trainer, csf_metrics* out) {
  return guarded([&] {
    need(trainer, "trainer");
    const csf::IterationMetrics m = trainer->value->iterate();
    if (out) *out = to_c(m);
  });
}

csf_status csf_trainer_save(const csf_trainer* trainer, const char* path) {
  return guarded([&] {
    need(trainer, "trainer");
    need(path, "path");
    trainer->value->save(path);
  });
}

csf_status csf_trainer_env_steps(const csf_trainer* trainer, uint64_t* out) {
  return guarded([&] {
    need(trainer, "trainer");
    need(out, "out");
    *out = trainer->value->env_steps();
  });
}

csf_status csf_run_experiment(const csf_config* config, const char* run_dir, csf_progress_fn progress, void* user,
                              csf_metrics* last) {
  return guarded([&] {
    need(config, "config");
    need(run_dir, "run_dir");
    csf::ExperimentCallbacks cb;
    if (progress) cb.on_iteration = [&](const csf::IterationMetrics& m) {
      const csf_metrics c = to_c(m);
      progress(&c, user);
    };
    const csf::ExperimentReport r = csf::run_experiment(config->value, run_dir, cb);
    if (last) *last = to_c(r.last);
  });
}

csf_status csf_evaluate(const char* checkpoint, const csf_config* config, uint64_t seed, const char* goals_file,
                        const char* out_dir, csf_eval_summary* out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(config, "config");
    need(out_dir, "out_dir");
    const csf::Trainer t = csf::Trainer::load(checkpoint, config->value);
    std::optional<std::vector<csf::GoalTask>> goals;
    if (goals_file) goals = csf::load_goals_file(goals_file, config->value.eval_radius);
    const csf::EvalReport r = csf::evaluate_checkpoint(t, seed, goals);
    std::filesystem::create_directories(out_dir);
    const auto path = std::filesystem::path(out_dir) / "eval.json";
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    csf::require(static_cast<bool>(f), csf::ErrorCode::io, "cannot write " + path.string());
    f << csf::eval_json(r);
    if (out) *out = {r.coverage, r.random_baseline, r.goals.goals.size(), r.goals.mean};
  });
}

csf_status csf_random_baseline(const csf_config* config, uint64_t seed, uint64_t* cells) {
  return guarded([&] {
    need(config, "config");
    need(cells, "cells");
    const auto& c = config->value;
    *cells = csf::random_baseline_coverage(c.env, c.eval_skills, c.eval_cell_size, seed);
  });
}

csf_status csf_diagnose(const char* checkpoint, const csf_config* config, const char* buffer_jsonl,
                        const char* out_dir, csf_diag_summary* out) {
  return guarded([&] {
    need(buffer_jsonl, "buffer_jsonl");
    need(out_dir, "out_dir");
    std::unique_ptr<csf::Trainer> t;
    if (checkpoint) {
      need(config, "config");
      t = std::make_unique<csf::Trainer>(csf::Trainer::load(checkpoint, config->value));
    }
    const auto rows = csf::read_transitions_jsonl(buffer_jsonl);
    const csf::DiagnoseReport r = csf::diagnose_transitions(t.get(), rows);
    csf::write_diagnose_outputs(r, out_dir);
    if (out) {
      const auto& d = r.diagnostics;
      *out = {d.n, d.mean_sq_norm, r.slope.n ? r.slope.slope : NAN, d.mean_resultant_length, d.isotropic ? 1 : 0,
              d.uniform ? 1 : 0};
    }
  });
}

csf_status csf_selftest(const char* scratch_dir, csf_check_fn on_result, void* user, int* failures) {
  return guarded([&] {
    need(scratch_dir, "scratch_dir");
    std::filesystem::create_directories(scratch_dir);
    int failed = 0;
    csf::run_selftest(scratch_dir, [&](const csf::CheckResult& r) {
      if (!r.passed) ++failed;
      if (!on_result) return;
      const std::string line = csf::format_check(r);
      const csf_check_result c{r.id, r.passed ? 1 : 0, r.value, r.seconds, r.name.c_str(), line.c_str()};
      on_result(&c, user);
    });
    if (failures) *failures = failed;
  });
}

csf_status csf_sweep_load(const char* path, csf_sweep** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new csf_sweep{csf::load_sweep(path)};
  });
}

void csf_sweep_free(csf_sweep* sweep) { delete sweep; }

csf_status csf_sweep_shape(const csf_sweep* sweep, size_t* n_variants, size_t* n_seeds) {
  return guarded([&] {
    need(sweep, "sweep");
    if (n_variants) *n_variants = sweep->value.variants.size();
    if (n_seeds) *n_seeds = sweep->value.seeds.size();
  });
}

csf_status csf_sweep_variant_name(const csf_sweep* sweep, size_t variant, char* buf, size_t cap, size_t* needed) {
  std::string s;
  const csf_status st = guarded([&] {
    need(sweep, "sweep");
    csf::require(variant < sweep->value.variants.size(), csf::ErrorCode::range, "variant index out of range");
    s = sweep->value.variants[variant].name;
  });
  return st == CSF_OK ? copy_out(s, buf, cap, needed) : st;
}

csf_status csf_sweep_seed(const csf_sweep* sweep, size_t seed_index, uint64_t* seed) {
  return guarded([&] {
    need(sweep, "sweep");
    need(seed, "seed");
    csf::require(seed_index < sweep->value.seeds.size(), csf::ErrorCode::range, "seed index out of range");
    *seed = sweep->value.seeds[seed_index];
  });
}

csf_status csf_sweep_config(const csf_sweep* sweep, size_t variant, size_t seed_index, csf_config** out) {
  return guarded([&] {
    need(sweep, "sweep");
    need(out, "out");
    const auto& s = sweep->value;
    csf::require(variant < s.variants.size() && seed_index < s.seeds.size(), csf::ErrorCode::range,
                 "sweep index out of range");
    *out = new csf_config{csf::sweep_config(s, s.variants[variant], s.seeds[seed_index])};
  });
}

csf_status csf_read_run_result(const char* run_dir, csf_run_result* out) {
  return guarded([&] {
    need(run_dir, "run_dir");
    need(out, "out");
    const csf::SweepRun r = csf::read_run_result(run_dir);
    out->ok = r.ok ? 1 : 0;
    out->final_coverage = r.final_coverage;
    out->final_goal_staying = r.final_goal_staying;
  });
}

csf_status csf_write_ablation_summary(const csf_run_result* runs, size_t n, const char* path) {
  return guarded([&] {
    need(path, "path");
    if (n) need(runs, "runs");
    std::vector<csf::SweepRun> rows;
    for (size_t i = 0; i < n; ++i) {
      need(runs[i].variant, "variant");
      rows.push_back({runs[i].variant, runs[i].seed, runs[i].ok != 0, "", runs[i].final_coverage,
                      runs[i].final_goal_staying});
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    csf::require(static_cast<bool>(f), csf::ErrorCode::io, std::string("cannot write ") + path);
    f << csf::ablation_summary_csv(rows);
  });
}

}  // extern "C"
