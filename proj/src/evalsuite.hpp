#pragma once

// Evaluation protocols: state coverage, zero-shot goal reaching by skill
// inference, representation diagnostics, and the successor-feature oracle
// comparison.

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "envs.hpp"
#include "hypersphere.hpp"
#include "repr.hpp"

namespace csf {

/// Maps a batch of raw observations and skills to actions.
using ActionFn = std::function<Matrix(const Matrix& obs, const Matrix& z)>;

class CoverageGrid {
 public:
  explicit CoverageGrid(double cell_size = 1.0);
  void add(double x, double y);
  std::size_t count() const noexcept { return cells_.size(); }
  double cell_size() const noexcept { return cell_; }

 private:
  double cell_;
  std::set<std::pair<std::int64_t, std::int64_t>> cells_;
};

/// One episode per skill row, all stepped in lockstep; every visited
/// position (including the start) marks its cell. Returns the cell count.
std::size_t measure_coverage(const EnvSpec& spec, const ActionFn& act, const Matrix& skills,
                             double cell_size, Rng& rng);

/// Uniform random actions in [-1, 1], ignoring the skill.
ActionFn random_actions(std::size_t action_dim, Rng& rng);

/// Coverage of uniform random actions, one episode per skill slot; the
/// reference point for trained agents.
std::size_t random_baseline_coverage(const EnvSpec& spec, std::size_t n_skills, double cell_size,
                                     std::uint64_t seed);

/// The skill a policy should follow to move from `obs` toward `goal_obs`:
/// the normalized representation difference, or for one-hot skills its
/// largest coordinate. A difference below 1e-8 falls back to a random skill
/// and sets *degenerate.
std::vector<double> infer_goal_skill(const ReprNet& repr, const StateNormalizer& norm,
                                     std::span<const double> obs, std::span<const double> goal_obs,
                                     SkillMode mode, Rng& rng, bool* degenerate = nullptr);

struct GoalTask {
  double x = 0.0;
  double y = 0.0;
  double radius = 1.0;
};

/// Skill source during a goal episode: called every reinference period.
using SkillFn = std::function<std::vector<double>(std::span<const double> obs, std::span<const double> goal_obs)>;

/// Fraction of the horizon's steps ending within `radius` of the goal.
double staying_time_fraction(const EnvSpec& spec, const ActionFn& act, const SkillFn& skill,
                             const GoalTask& task, std::size_t reinference_period, Rng& rng);

struct GoalEvaluation {
  std::vector<GoalTask> goals;
  std::vector<double> fractions;
  double mean = 0.0;
  std::size_t degenerate_inferences = 0;
};

std::vector<GoalTask> sample_goals(std::size_t n, double range, double radius, Rng& rng);

/// Deterministic policy, skills re-inferred from the representation.
struct AgentView {
  const ReprNet& repr;
  const ParamSet& policy;
  const StateNormalizer& norm;
  SkillMode skill_mode;
};

ActionFn deterministic_actions(const AgentView& agent);

GoalEvaluation evaluate_goals(const EnvSpec& spec, const AgentView& agent, const std::vector<GoalTask>& goals,
                              std::size_t reinference_period, Rng& rng);

// ---------------------------------------------------------------------------

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t n = 0;
};

/// Least squares of log_partition(w) against |w|^2 over the rows of `w`.
LinearFit fit_log_partition_slope(const Matrix& w);

struct DiagnosticThresholds {
  double isotropy_var_gap = 0.02;
  double isotropy_offdiag = 0.02;
  double uniformity_rbar = 0.2;
};

struct ReprDiagnostics {
  std::size_t n = 0;
  std::size_t d = 0;
  double mean_sq_norm = 0.0;
  std::vector<double> sq_norms;
  std::vector<double> residual_var;     // per coordinate of dphi - z
  double residual_var_gap = 0.0;        // max pairwise |var_i - var_j|
  double residual_offdiag = 0.0;        // max |cov_ij|, i != j
  double mean_resultant_length = 0.0;   // |mean of dphi / |dphi||
  double rayleigh_stat = 0.0;           // d n Rbar^2, ~ chi^2_d under uniformity
  double rayleigh_p = 1.0;
  double entropy = 0.0;
  double log_partition_mean = 0.0;
  bool entropy_available = false;
  bool isotropic = false;
  bool uniform = false;
  Matrix residuals;   // n x d
  Matrix directions;  // n x d, unit rows
};

/// Needs at least 100 rows. Zero rows of dphi are skipped for the
/// direction statistics. The entropy estimate is skipped (and flagged) when
/// a norm exceeds the log-partition's supported range.
ReprDiagnostics repr_diagnostics(const Matrix& dphi, const Matrix& z, const DiagnosticThresholds& t = {});

std::string diagnostics_json(const ReprDiagnostics& d, const LinearFit& slope, const DiagnosticThresholds& t = {});
/// sq_norm.csv, residuals.csv and directions.csv (with an angle column in 2-D).
void write_histogram_csvs(const ReprDiagnostics& d, const std::string& dir);

// ---------------------------------------------------------------------------

/// max |psi(s,a) - oracle(s,a)| over all pairs and coordinates.
double sf_oracle_check(const ChainFeatures& learned, std::size_t n_states, const ChainPolicy& policy,
                       const ChainFeatures& features, double gamma);

}  // namespace csf
