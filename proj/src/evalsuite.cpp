#include "evalsuite.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "sf_policy.hpp"

namespace csf {

CoverageGrid::CoverageGrid(double cell_size) : cell_(cell_size) {
  require(cell_size > 0.0, ErrorCode::invalid_argument, "coverage cell size must be positive");
}

void CoverageGrid::add(double x, double y) {
  cells_.emplace(static_cast<std::int64_t>(std::floor(x / cell_)), static_cast<std::int64_t>(std::floor(y / cell_)));
}

std::size_t measure_coverage(const EnvSpec& spec, const ActionFn& act, const Matrix& skills,
                             double cell_size, Rng& rng) {
  CoverageGrid grid(cell_size);
  const std::size_t n = skills.rows();
  std::vector<EnvState> states;
  for (std::size_t i = 0; i < n; ++i) {
    states.push_back(reset(spec, rng));
    grid.add(states.back().x, states.back().y);
  }
  Matrix obs(n, spec.obs_dim());
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) std::copy(states[i].obs.begin(), states[i].obs.end(), obs.row(i).begin());
    const Matrix a = act(obs, skills);
    for (std::size_t i = 0; i < n; ++i) {
      states[i] = step(spec, states[i], a.row(i)).next;
      grid.add(states[i].x, states[i].y);
    }
  }
  return grid.count();
}

ActionFn random_actions(std::size_t action_dim, Rng& rng) {
  return [action_dim, &rng](const Matrix& obs, const Matrix&) {
    Matrix a(obs.rows(), action_dim);
    for (double& v : a.values()) v = rng.uniform(-1.0, 1.0);
    return a;
  };
}

std::size_t random_baseline_coverage(const EnvSpec& spec, std::size_t n_skills, double cell_size,
                                     std::uint64_t seed) {
  Rng rng(seed);
  const Matrix skills(n_skills, 1);
  return measure_coverage(spec, random_actions(spec.action_dim(), rng), skills, cell_size, rng);
}

std::vector<double> infer_goal_skill(const ReprNet& repr, const StateNormalizer& norm,
                                     std::span<const double> obs, std::span<const double> goal_obs,
                                     SkillMode mode, Rng& rng, bool* degenerate) {
  const Matrix s = norm.normalize(Matrix::row_vector(obs));
  const Matrix g = norm.normalize(Matrix::row_vector(goal_obs));
  const Matrix diff = delta_phi(repr, s, g);
  const double len = norm2(diff.values());
  if (degenerate) *degenerate = false;
  if (!(len > 1e-8) || !critic_uses_skill(repr.critic)) {
    if (degenerate) *degenerate = true;
    std::clog << "warning: degenerate goal representation difference; using a random skill\n";
    return sample_skill(mode, repr.d, rng).values;
  }
  std::vector<double> z(diff.values().begin(), diff.values().end());
  if (mode == SkillMode::one_hot) {
    const auto best = std::max_element(z.begin(), z.end()) - z.begin();
    std::fill(z.begin(), z.end(), 0.0);
    z[static_cast<std::size_t>(best)] = 1.0;
    return z;
  }
  for (double& v : z) v /= len;
  return z;
}

double staying_time_fraction(const EnvSpec& spec, const ActionFn& act, const SkillFn& skill,
                             const GoalTask& task, std::size_t reinference_period, Rng& rng) {
  require(task.radius > 0.0, ErrorCode::invalid_argument, "goal radius must be positive");
  require(reinference_period >= 1, ErrorCode::invalid_argument, "re-inference period must be >= 1");
  const std::vector<double> goal_obs = observation_at(spec, task.x, task.y);
  EnvState s = reset(spec, rng);
  std::vector<double> z;
  std::size_t inside = 0;
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    if (t % reinference_period == 0) z = skill(s.obs, goal_obs);
    const Matrix a = act(Matrix::row_vector(s.obs), Matrix::row_vector(z));
    s = step(spec, s, a.row(0)).next;
    if (std::hypot(s.x - task.x, s.y - task.y) <= task.radius) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(spec.horizon);
}

std::vector<GoalTask> sample_goals(std::size_t n, double range, double radius, Rng& rng) {
  std::vector<GoalTask> goals(n);
  for (auto& g : goals) {
    g.x = rng.uniform(-range, range);
    g.y = rng.uniform(-range, range);
    g.radius = radius;
  }
  return goals;
}

ActionFn deterministic_actions(const AgentView& agent) {
  return [&agent](const Matrix& obs, const Matrix& z) {
    Rng unused(0);
    return policy_act(agent.policy, agent.norm.normalize(obs), z, unused, true);
  };
}

GoalEvaluation evaluate_goals(const EnvSpec& spec, const AgentView& agent, const std::vector<GoalTask>& goals,
                              std::size_t reinference_period, Rng& rng) {
  GoalEvaluation out;
  out.goals = goals;
  const ActionFn act = deterministic_actions(agent);
  const SkillFn skill = [&](std::span<const double> obs, std::span<const double> goal) {
    bool degenerate = false;
    auto z = infer_goal_skill(agent.repr, agent.norm, obs, goal, agent.skill_mode, rng, &degenerate);
    if (degenerate) ++out.degenerate_inferences;
    return z;
  };
  for (const auto& g : goals) out.fractions.push_back(staying_time_fraction(spec, act, skill, g, reinference_period, rng));
  double s = 0.0;
  for (double f : out.fractions) s += f;
  out.mean = goals.empty() ? 0.0 : s / static_cast<double>(goals.size());
  return out;
}

// ---------------------------------------------------------------------------

LinearFit fit_log_partition_slope(const Matrix& w) {
  LinearFit fit;
  fit.n = w.rows();
  require(fit.n >= 2, ErrorCode::invalid_argument, "slope fit needs at least 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < fit.n; ++i) {
    const double x = dot(w.row(i), w.row(i));
    const double y = log_partition(w.row(i));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(fit.n);
  const double den = n * sxx - sx * sx;
  require(den > 0.0, ErrorCode::numerical, "slope fit needs varying norms");
  fit.slope = (n * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

ReprDiagnostics repr_diagnostics(const Matrix& dphi, const Matrix& z, const DiagnosticThresholds& t) {
  ReprDiagnostics r;
  r.n = dphi.rows();
  r.d = dphi.cols();
  require(r.n >= 100, ErrorCode::invalid_argument,
          "insufficient data: diagnostics need at least 100 samples, got " + std::to_string(r.n));
  require(dphi.same_shape(z), ErrorCode::dimension, "representation steps and skills differ in shape");
  require(r.d >= 2, ErrorCode::invalid_argument, "diagnostics need d >= 2");
  const double n = static_cast<double>(r.n);

  r.residuals = Matrix(r.n, r.d);
  std::vector<double> mean_res(r.d, 0.0);
  for (std::size_t i = 0; i < r.n; ++i) {
    const double sq = dot(dphi.row(i), dphi.row(i));
    r.sq_norms.push_back(sq);
    r.mean_sq_norm += sq / n;
    for (std::size_t c = 0; c < r.d; ++c) {
      r.residuals(i, c) = dphi(i, c) - z(i, c);
      mean_res[c] += r.residuals(i, c) / n;
    }
  }
  std::vector<std::vector<double>> cov(r.d, std::vector<double>(r.d, 0.0));
  for (std::size_t i = 0; i < r.n; ++i)
    for (std::size_t a = 0; a < r.d; ++a)
      for (std::size_t b = 0; b < r.d; ++b)
        cov[a][b] += (r.residuals(i, a) - mean_res[a]) * (r.residuals(i, b) - mean_res[b]) / n;
  for (std::size_t a = 0; a < r.d; ++a) {
    r.residual_var.push_back(cov[a][a]);
    for (std::size_t b = 0; b < r.d; ++b) {
      if (a == b) continue;
      r.residual_offdiag = std::max(r.residual_offdiag, std::abs(cov[a][b]));
      r.residual_var_gap = std::max(r.residual_var_gap, std::abs(cov[a][a] - cov[b][b]));
    }
  }

  std::vector<double> resultant(r.d, 0.0);
  std::vector<std::size_t> nonzero;
  bool in_range = true;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double len = std::sqrt(r.sq_norms[i]);
    if (len <= 1e-12) continue;
    nonzero.push_back(i);
    if (len > 50.0) in_range = false;
  }
  r.directions = Matrix(nonzero.size(), r.d);
  Matrix kept(nonzero.size(), r.d);
  for (std::size_t k = 0; k < nonzero.size(); ++k) {
    const std::size_t i = nonzero[k];
    const double len = std::sqrt(r.sq_norms[i]);
    for (std::size_t c = 0; c < r.d; ++c) {
      r.directions(k, c) = dphi(i, c) / len;
      kept(k, c) = dphi(i, c);
      resultant[c] += r.directions(k, c);
    }
  }
  const double m = static_cast<double>(nonzero.size());
  if (m > 0) {
    for (double& v : resultant) v /= m;
    r.mean_resultant_length = norm2(resultant);
    r.rayleigh_stat = static_cast<double>(r.d) * m * r.mean_resultant_length * r.mean_resultant_length;
    r.rayleigh_p = boost::math::cdf(boost::math::complement(
        boost::math::chi_squared_distribution<double>(static_cast<double>(r.d)), r.rayleigh_stat));
  }
  if (nonzero.size() >= 2 && in_range) {
    const EntropyEstimate e = entropy_diagnostic(kept);
    r.entropy = e.entropy;
    r.log_partition_mean = e.log_partition_mean;
    r.entropy_available = true;
  }
  r.isotropic = r.residual_var_gap < t.isotropy_var_gap && r.residual_offdiag < t.isotropy_offdiag;
  r.uniform = m > 0 && r.mean_resultant_length < t.uniformity_rbar;
  return r;
}

std::string diagnostics_json(const ReprDiagnostics& d, const LinearFit& slope, const DiagnosticThresholds& t) {
  nlohmann::json j;
  j["n"] = d.n;
  j["d"] = d.d;
  j["expected_constraint"] = {{"mean_sq_norm", d.mean_sq_norm}};
  j["isotropy"] = {{"residual_var", d.residual_var},
                   {"residual_var_gap", d.residual_var_gap},
                   {"residual_offdiag", d.residual_offdiag},
                   {"var_gap_threshold", t.isotropy_var_gap},
                   {"offdiag_threshold", t.isotropy_offdiag},
                   {"pass", d.isotropic}};
  j["uniformity"] = {{"mean_resultant_length", d.mean_resultant_length},
                     {"rayleigh_stat", d.rayleigh_stat},
                     {"rayleigh_p", d.rayleigh_p},
                     {"rbar_threshold", t.uniformity_rbar},
                     {"pass", d.uniform}};
  if (d.entropy_available)
    j["entropy"] = {{"resubstitution", d.entropy}, {"log_partition_mean", d.log_partition_mean}};
  else
    j["entropy"] = nullptr;
  j["log_partition_fit"] = {{"slope", slope.slope}, {"intercept", slope.intercept}, {"n", slope.n}};
  return j.dump(2) + "\n";
}

void write_histogram_csvs(const ReprDiagnostics& d, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(std::filesystem::path(dir) / name, std::ios::trunc);
    require(static_cast<bool>(f), ErrorCode::io, "cannot write " + dir + "/" + name);
    f.precision(17);
    return f;
  };
  {
    auto f = open("sq_norm.csv");
    f << "sq_norm\n";
    for (double v : d.sq_norms) f << v << '\n';
  }
  {
    auto f = open("residuals.csv");
    for (std::size_t c = 0; c < d.d; ++c) f << (c ? "," : "") << "r" << c;
    f << '\n';
    for (std::size_t i = 0; i < d.residuals.rows(); ++i) {
      for (std::size_t c = 0; c < d.d; ++c) f << (c ? "," : "") << d.residuals(i, c);
      f << '\n';
    }
  }
  {
    auto f = open("directions.csv");
    for (std::size_t c = 0; c < d.d; ++c) f << (c ? "," : "") << "u" << c;
    if (d.d == 2) f << ",angle";
    f << '\n';
    for (std::size_t i = 0; i < d.directions.rows(); ++i) {
      for (std::size_t c = 0; c < d.d; ++c) f << (c ? "," : "") << d.directions(i, c);
      if (d.d == 2) f << ',' << std::atan2(d.directions(i, 1), d.directions(i, 0));
      f << '\n';
    }
  }
}

double sf_oracle_check(const ChainFeatures& learned, std::size_t n_states, const ChainPolicy& policy,
                       const ChainFeatures& features, double gamma) {
  const ChainFeatures oracle = chain_sf_oracle(n_states, policy, features, gamma);
  require(learned.size() == n_states, ErrorCode::dimension, "learned table has the wrong number of states");
  double err = 0.0;
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < kChainActions; ++a) {
      require(learned[s][a].size() == oracle[s][a].size(), ErrorCode::dimension, "feature width mismatch");
      for (std::size_t k = 0; k < oracle[s][a].size(); ++k)
        err = std::max(err, std::abs(learned[s][a][k] - oracle[s][a][k]));
    }
  return err;
}

}  // namespace csf
