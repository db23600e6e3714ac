#include "workflows.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace csf {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::io, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), ErrorCode::io, "cannot write " + path.string());
  f << text;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

EvalReport evaluate_checkpoint(const Trainer& trainer, std::uint64_t seed,
                               const std::optional<std::vector<GoalTask>>& goals) {
  const TrainConfig& c = trainer.config();
  require(c.env.kind != EnvKind::chain_mdp, ErrorCode::config, "evaluation needs a planar environment, not env.name = chain");
  EvalReport r;
  r.seed = seed;
  r.n_skills = c.eval_skills;
  r.cell_size = c.eval_cell_size;
  r.reinference_period = c.eval_reinference_period;
  const AgentView agent{trainer.repr(), trainer.policy(), trainer.normalizer(), c.skill_mode};

  Rng rng(seed);
  const Matrix skills = sample_skills(c.skill_mode, c.skill_dim, c.eval_skills, rng);
  r.coverage = measure_coverage(c.env, deterministic_actions(agent), skills, c.eval_cell_size, rng);
  r.random_baseline = random_baseline_coverage(c.env, c.eval_skills, c.eval_cell_size, seed);
  const auto tasks = goals ? *goals : sample_goals(c.eval_goals, c.eval_goal_range, c.eval_radius, rng);
  r.goals = evaluate_goals(c.env, agent, tasks, c.eval_reinference_period, rng);
  return r;
}

std::string eval_json(const EvalReport& r) {
  nlohmann::json j;
  j["seed"] = r.seed;
  j["coverage"] = {{"cells", r.coverage},
                   {"n_skills", r.n_skills},
                   {"cell_size", r.cell_size},
                   {"random_baseline", r.random_baseline}};
  nlohmann::json goals = nlohmann::json::array();
  for (std::size_t i = 0; i < r.goals.goals.size(); ++i) {
    const auto& g = r.goals.goals[i];
    goals.push_back({{"x", g.x}, {"y", g.y}, {"radius", g.radius}, {"staying_frac", r.goals.fractions[i]}});
  }
  const auto& f = r.goals.fractions;
  double mean = 0.0, sd = 0.0, lo = 0.0, hi = 0.0, median = 0.0;
  if (!f.empty()) {
    mean = r.goals.mean;
    for (double v : f) sd += (v - mean) * (v - mean);
    sd = f.size() > 1 ? std::sqrt(sd / static_cast<double>(f.size() - 1)) : 0.0;
    std::vector<double> sorted = f;
    std::sort(sorted.begin(), sorted.end());
    lo = sorted.front();
    hi = sorted.back();
    const std::size_t m = sorted.size() / 2;
    median = sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  }
  j["goals"] = goals;
  j["staying_time"] = {{"n_goals", f.size()},
                       {"mean", mean},
                       {"std", sd},
                       {"median", median},
                       {"min", lo},
                       {"max", hi},
                       {"reinference_period", r.reinference_period},
                       {"degenerate_inferences", r.goals.degenerate_inferences}};
  return j.dump(2) + "\n";
}

std::vector<GoalTask> load_goals_file(const std::string& path, double default_radius) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, path + ": " + e.what());
  }
  require(j.is_array() && !j.empty(), ErrorCode::config, path + ": expected a non-empty JSON array of goals");
  std::vector<GoalTask> out;
  for (const auto& g : j) {
    GoalTask t;
    t.radius = default_radius;
    if (g.is_array() && g.size() == 2 && g[0].is_number() && g[1].is_number()) {
      t.x = g[0].get<double>();
      t.y = g[1].get<double>();
    } else if (g.is_object() && g.contains("x") && g.contains("y") && g["x"].is_number() && g["y"].is_number()) {
      t.x = g["x"].get<double>();
      t.y = g["y"].get<double>();
      if (g.contains("radius")) {
        require(g["radius"].is_number(), ErrorCode::config, path + ": goal radius must be a number");
        t.radius = g["radius"].get<double>();
      }
    } else {
      fail(ErrorCode::config, path + ": goal " + std::to_string(out.size()) + " is neither {x, y} nor [x, y]");
    }
    require(t.radius > 0.0, ErrorCode::config, path + ": goal radius must be positive");
    out.push_back(t);
  }
  return out;
}

DiagnoseReport diagnose_transitions(const Trainer* trainer, const std::vector<TransitionRecord>& records) {
  require(records.size() >= 100, ErrorCode::invalid_argument,
          "insufficient data: diagnostics need at least 100 transitions, got " + std::to_string(records.size()));
  const std::size_t obs_dim = records.front().obs.size(), d = records.front().z.size();
  Matrix obs(records.size(), obs_dim), next(records.size(), obs_dim), z(records.size(), d);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    require(r.obs.size() == obs_dim && r.next_obs.size() == obs_dim && r.z.size() == d, ErrorCode::dimension,
            "transition " + std::to_string(i) + " has inconsistent widths");
    std::copy(r.obs.begin(), r.obs.end(), obs.row(i).begin());
    std::copy(r.next_obs.begin(), r.next_obs.end(), next.row(i).begin());
    std::copy(r.z.begin(), r.z.end(), z.row(i).begin());
  }
  Matrix dphi;
  if (trainer) {
    require(obs_dim == trainer->config().env.obs_dim() && d == trainer->config().skill_dim, ErrorCode::dimension,
            "buffer widths disagree with the checkpoint (obs " + std::to_string(obs_dim) + ", skill " +
                std::to_string(d) + ")");
    dphi = delta_phi(trainer->repr(), trainer->normalize(obs), trainer->normalize(next));
  } else {
    require(obs_dim == d, ErrorCode::dimension, "raw diagnostics need obs width equal to the skill width");
    dphi = Matrix(next.rows(), d);
    for (std::size_t k = 0; k < dphi.size(); ++k) dphi[k] = next[k] - obs[k];
  }

  DiagnoseReport out;
  out.diagnostics = repr_diagnostics(dphi, z);
  // The closed-form log-partition is only evaluated up to |w| = 50.
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < dphi.rows(); ++i)
    if (norm2(dphi.row(i)) <= 50.0) keep.push_back(i);
  out.slope_excluded = dphi.rows() - keep.size();
  if (d >= 2 && keep.size() >= 2) out.slope = fit_log_partition_slope(select_rows(dphi, keep));
  return out;
}

void write_diagnose_outputs(const DiagnoseReport& r, const std::string& out_dir) {
  fs::create_directories(out_dir);
  nlohmann::json j = nlohmann::json::parse(diagnostics_json(r.diagnostics, r.slope));
  j["log_partition_fit"]["excluded"] = r.slope_excluded;
  write_text(fs::path(out_dir) / "diagnostics.json", j.dump(2) + "\n");
  write_histogram_csvs(r.diagnostics, (fs::path(out_dir) / "histograms").string());
}

// ---------------------------------------------------------------------------

SweepSpec parse_sweep(const std::string& text, const std::string& base_dir) {
  SweepSpec spec;
  bool have_base = false;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto where = [&] { return "sweep line " + std::to_string(lineno) + ": "; };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::config, where() + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "base") {
      fs::path p(value);
      if (p.is_relative()) p = fs::path(base_dir) / p;
      spec.base = load_config(p.string());
      have_base = true;
    } else if (key == "seeds") {
      std::istringstream ss(value);
      std::string tok;
      while (ss >> tok) {
        try {
          std::size_t used = 0;
          spec.seeds.push_back(std::stoull(tok, &used));
          require(used == tok.size(), ErrorCode::config, "");
        } catch (const std::exception&) {
          fail(ErrorCode::config, where() + "bad seed '" + tok + "'");
        }
      }
    } else if (key.rfind("variant ", 0) == 0) {
      SweepVariant v;
      v.name = trim(key.substr(8));
      require(!v.name.empty() && v.name.find_first_of("/\\ ,") == std::string::npos, ErrorCode::config,
              where() + "variant names must be non-empty without '/', ',' or spaces");
      for (const auto& other : spec.variants)
        require(other.name != v.name, ErrorCode::config, where() + "duplicate variant '" + v.name + "'");
      std::istringstream ss(value);
      std::string tok;
      while (ss >> tok) {
        const auto at = tok.find('=');
        require(at != std::string::npos && at > 0, ErrorCode::config, where() + "override '" + tok + "' is not key=value");
        v.overrides.emplace_back(tok.substr(0, at), tok.substr(at + 1));
      }
      spec.variants.push_back(std::move(v));
    } else {
      fail(ErrorCode::config, where() + "unknown sweep key '" + key + "'");
    }
  }
  require(have_base, ErrorCode::config, "sweep: missing 'base = <config>'");
  require(!spec.seeds.empty(), ErrorCode::config, "sweep: missing 'seeds'");
  require(!spec.variants.empty(), ErrorCode::config, "sweep: no variants");
  // Surface bad overrides before anything runs.
  for (const auto& v : spec.variants) sweep_config(spec, v, spec.seeds.front());
  return spec;
}

SweepSpec load_sweep(const std::string& path) {
  return parse_sweep(read_text(path), fs::path(path).parent_path().string());
}

TrainConfig sweep_config(const SweepSpec& spec, const SweepVariant& variant, std::uint64_t seed) {
  TrainConfig c = spec.base;
  try {
    for (const auto& [k, v] : variant.overrides) set_config_value(c, k, v);
    c.seed = seed;
    c.validate();
  } catch (const Error& e) {
    fail(e.code(), "variant '" + variant.name + "': " + e.what());
  }
  return c;
}

std::string ablation_summary_csv(const std::vector<SweepRun>& runs) {
  std::ostringstream out;
  out << "variant,seed,status,final_coverage,final_coverage_std,final_goal_staying,final_goal_staying_std,n\n";
  std::vector<std::string> order;
  for (const auto& r : runs) {
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
    out << r.variant << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << format_double(r.final_coverage)
        << ",," << format_double(r.final_goal_staying) << ",,1\n";
  }
  auto stats = [](const std::vector<double>& v) {
    std::pair<double, double> ms{kMissing, kMissing};
    if (v.empty()) return ms;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    ms.first = m;
    ms.second = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
    return ms;
  };
  for (const auto& name : order) {
    std::vector<double> cov, goal;
    for (const auto& r : runs) {
      if (r.variant != name || !r.ok) continue;
      if (!std::isnan(r.final_coverage)) cov.push_back(r.final_coverage);
      if (!std::isnan(r.final_goal_staying)) goal.push_back(r.final_goal_staying);
    }
    const auto [cm, cs] = stats(cov);
    const auto [gm, gs] = stats(goal);
    out << name << ",mean," << (cov.empty() ? "failed" : "ok") << ',' << format_double(cm) << ','
        << format_double(cs) << ',' << format_double(gm) << ',' << format_double(gs) << ',' << cov.size() << '\n';
  }
  return out.str();
}

SweepRun read_run_result(const std::string& run_dir) {
  SweepRun r;
  const std::string text = read_text((fs::path(run_dir) / "metrics.csv").string());
  std::istringstream in(text);
  std::string line, last;
  std::getline(in, line);
  require(line + "\n" == metrics_csv_header(), ErrorCode::io, run_dir + "/metrics.csv has an unexpected header");
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::vector<std::string> fields;
    std::string f;
    while (std::getline(row, f, ',')) fields.push_back(f);
    if (fields.size() > 9 && !fields[8].empty()) {
      r.final_coverage = std::stod(fields[8]);
      r.final_goal_staying = fields[9].empty() ? kMissing : std::stod(fields[9]);
    }
  }
  r.ok = !std::isnan(r.final_coverage);
  if (!r.ok) r.error = "no evaluated iteration in " + run_dir + "/metrics.csv";
  return r;
}

}  // namespace csf
