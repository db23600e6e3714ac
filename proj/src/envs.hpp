#pragma once

// Reward-free toy environments, a running observation normalizer, and
// exact dynamic-programming references on the tabular chain.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"

namespace csf {

enum class EnvKind { point_mass_2d, chain_mdp, grid_room };

EnvKind parse_env_kind(const std::string& name);
std::string env_kind_name(EnvKind kind);

struct EnvSpec {
  EnvKind kind = EnvKind::point_mass_2d;
  std::size_t horizon = 200;
  double dt = 0.1;
  double damping = 0.98;
  double action_clamp = 1.0;
  double reset_noise = 0.01;
  /// Half-width of the walled square for grid_room.
  double bounds = 10.0;
  /// Number of chain states for chain_mdp.
  std::size_t chain_states = 5;

  std::size_t obs_dim() const;
  std::size_t action_dim() const;
  void validate() const;
};

/// No reward field: environments here never produce one.
struct EnvState {
  std::vector<double> obs;
  double x = 0.0;
  double y = 0.0;
  std::size_t step = 0;
};

struct StepResult {
  EnvState next;
  bool done = false;
};

EnvState reset(const EnvSpec& spec, Rng& rng);
/// Actions are clamped to [-clamp, clamp]; NaN actions are rejected.
StepResult step(const EnvSpec& spec, const EnvState& state, std::span<const double> action);
/// Observation an agent would see standing still at (x, y).
std::vector<double> observation_at(const EnvSpec& spec, double x, double y);

// ---------------------------------------------------------------------------

/// Welford running moments per coordinate.
class StateNormalizer {
 public:
  StateNormalizer() = default;
  explicit StateNormalizer(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  void update(std::span<const double> obs);
  /// Chan et al. parallel merge.
  void merge(const StateNormalizer& other);
  /// Identity until the first observation arrives.
  std::vector<double> normalize(std::span<const double> obs) const;
  /// Row-wise normalization of a batch.
  Matrix normalize(const Matrix& batch) const;

  std::size_t dim() const noexcept { return mean_.size(); }
  double count() const noexcept { return count_; }
  const std::vector<double>& mean() const noexcept { return mean_; }
  std::vector<double> variance() const;

  ParamSet to_arrays(const std::string& prefix) const;
  static StateNormalizer from_arrays(const ParamSet& arrays, const std::string& prefix);

 private:
  double count_ = 0.0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

inline constexpr double kNormalizerVarianceFloor = 1e-8;

// ---------------------------------------------------------------------------
// Tabular chain. Action 0 moves left, action 1 moves right; both saturate at
// the ends. Features are indexed [state][action] and hold one vector each.

inline constexpr std::size_t kChainActions = 2;

std::size_t chain_next(std::size_t n_states, std::size_t state, std::size_t action);

using ChainFeatures = std::vector<std::vector<std::vector<double>>>;
using ChainPolicy = std::vector<std::size_t>;

/// psi(s,a) = f(s,a) + gamma psi(s', pi(s')). With horizon == 0 the
/// infinite-horizon system is solved exactly (gamma < 1 required); otherwise
/// backward induction over `horizon` steps.
ChainFeatures chain_sf_oracle(std::size_t n_states, const ChainPolicy& policy,
                              const ChainFeatures& features, double gamma,
                              std::size_t horizon = 0);

/// Policy evaluation by fixed-point iteration on scalar rewards [s][a].
std::vector<std::vector<double>> chain_value_iteration(std::size_t n_states,
                                                       const ChainPolicy& policy,
                                                       const std::vector<std::vector<double>>& reward,
                                                       double gamma, double tol = 1e-14);

// ---------------------------------------------------------------------------

struct TransitionRecord {
  std::size_t t = 0;
  std::vector<double> obs;
  std::vector<double> action;
  std::vector<double> next_obs;
  std::vector<double> z;
  std::size_t episode_id = 0;
};

/// One JSON object per line with keys t, obs, action, next_obs, z, episode_id.
void write_transitions_jsonl(const std::string& path, const std::vector<TransitionRecord>& rows);
std::vector<TransitionRecord> read_transitions_jsonl(const std::string& path);

}  // namespace csf
