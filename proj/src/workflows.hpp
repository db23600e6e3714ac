#pragma once

// Whole-command building blocks shared by the C API and the tests:
// evaluating a checkpoint, diagnosing a buffer dump, and ablation sweeps.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "evalsuite.hpp"
#include "trainer.hpp"

namespace csf {

struct EvalReport {
  std::uint64_t seed = 0;
  std::size_t n_skills = 0;
  double cell_size = 1.0;
  std::size_t coverage = 0;
  std::size_t random_baseline = 0;
  std::size_t reinference_period = 1;
  GoalEvaluation goals;
};

/// Coverage over config.eval_skills sampled skills, the random-action
/// baseline under the same seed, and goal reaching on `goals` (or
/// config.eval_goals sampled ones).
EvalReport evaluate_checkpoint(const Trainer& trainer, std::uint64_t seed,
                               const std::optional<std::vector<GoalTask>>& goals = std::nullopt);

std::string eval_json(const EvalReport& r);

/// A JSON array of {"x", "y"[, "radius"]} objects or [x, y] pairs.
std::vector<GoalTask> load_goals_file(const std::string& path, double default_radius);

struct DiagnoseReport {
  ReprDiagnostics diagnostics;
  LinearFit slope;
  std::size_t slope_excluded = 0;  // rows beyond the log-partition's range
};

/// Diagnostics of dphi over the records, computed through `trainer`'s phi
/// and normalizer, or with next_obs - obs taken as dphi when `trainer` is null.
DiagnoseReport diagnose_transitions(const Trainer* trainer, const std::vector<TransitionRecord>& records);

/// diagnostics.json plus histograms/{sq_norm,residuals,directions}.csv.
void write_diagnose_outputs(const DiagnoseReport& r, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Ablation sweeps. The sweep file is line oriented:
//
//   base = configs/point_mass.cfg
//   seeds = 1 2 3 4 5
//   variant csf = reward.mode=csf
//   variant mi_only = reward.mode=mi_only train.lr=1e-3
//
// Relative base paths resolve against the sweep file's directory.

struct SweepVariant {
  std::string name;
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct SweepSpec {
  TrainConfig base;
  std::vector<std::uint64_t> seeds;
  std::vector<SweepVariant> variants;
};

SweepSpec parse_sweep(const std::string& text, const std::string& base_dir = ".");
SweepSpec load_sweep(const std::string& path);

/// The variant's configuration for one seed.
TrainConfig sweep_config(const SweepSpec& spec, const SweepVariant& variant, std::uint64_t seed);

struct SweepRun {
  std::string variant;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double final_coverage = kMissing;
  double final_goal_staying = kMissing;
};

/// One row per run, then one `mean` row per variant (in first-seen order)
/// with the sample standard deviation over successful runs.
std::string ablation_summary_csv(const std::vector<SweepRun>& runs);

/// Final coverage and goal fraction from the last evaluated metrics.csv row.
SweepRun read_run_result(const std::string& run_dir);

}  // namespace csf
