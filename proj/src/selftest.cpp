#include "selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "evalsuite.hpp"
#include "fixtures.hpp"
#include "hypersphere.hpp"
#include "sf_policy.hpp"
#include "trainer.hpp"

namespace csf {

namespace {

namespace fs = std::filesystem;

Matrix randn(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

template <class F>
CheckResult timed(F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = body();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

TrainConfig tiny_point_mass() {
  TrainConfig c;
  c.hidden_dim = 16;
  c.batch_size = 32;
  c.negatives = 16;
  c.updates_per_round = 3;
  c.trajectories_per_round = 2;
  c.env.horizon = 20;
  c.warmup_rounds = 1;
  c.total_env_steps = 240;
  c.eval_every = 2;
  c.eval_skills = 4;
  c.eval_goals = 2;
  c.lr = 1e-3;
  return c;
}

}  // namespace

CheckResult check_gradients(std::uint64_t seed) {
  return timed([&] {
    Rng rng(seed);
    double worst = 0.0;
    std::size_t configs = 0, scalars = 0;
    const CriticKind critics[] = {CriticKind::inner_product, CriticKind::monolithic_mlp, CriticKind::gaussian_kernel,
                                  CriticKind::laplacian_kernel};
    for (int trial = 0; trial < 120; ++trial) {
      const int kind = trial % 10;
      GradCheckReport rep;
      if (kind < 6) {
        const std::size_t in = 1 + rng.index(4), hid = 2 + rng.index(6), out = 1 + rng.index(3);
        const std::size_t rows = 1 + rng.index(4);
        const Activation act = trial % 2 ? Activation::relu : Activation::tanh;
        ParamSet p = init_mlp("g", {in, hid, out}, rng.next_u64());
        p.add("extra", randn(rows, out, rng, 0.5));
        const Matrix x = randn(rows, in, rng);
        rep = grad_check(p, [&](Tape& t, std::span<const Var> v) {
          std::vector<Var> net(v.begin(), v.end() - 1);
          const Var y = mlp(t, net, t.constant(x), act);
          const Var e = v.back();
          switch (kind) {
            case 0: return t.mean(t.row_logsumexp(t.add(y, e)));
            case 1: return t.sum(t.mul(t.exp(t.scale(y, 0.3)), e));
            case 2: return t.sum(t.log(t.add_scalar(t.square(t.sub(y, e)), 1.0)));
            case 3: return t.sum(t.log_cosh(t.concat_cols({y, e})));
            case 4: return t.mean(t.row_sum(t.mul(t.clamp(y, -5.0, 5.0), t.tanh(e))));
            default: return t.sum(t.matmul(t.transpose(t.abs(t.add_scalar(y, 3.0))), e));
          }
        }, 1e-4, rng.next_u64());
      } else if (kind == 6 || kind == 7) {
        const std::size_t obs = 2 + rng.index(3), d = 2 + rng.index(2), n = 4 + rng.index(6);
        ReprNet net = make_repr_net(critics[rng.index(4)], obs, d, 4 + rng.index(4), 1 + rng.index(2), rng.next_u64());
        net.act = Activation::tanh;
        ReprBatch b{randn(n, obs, rng), randn(n, obs, rng), sample_skills(SkillMode::continuous, d, n, rng)};
        const Matrix neg = sample_skills(SkillMode::continuous, d, 16 + rng.index(32), rng);
        const bool in_batch = rng.uniform() < 0.5;
        if (kind == 6)
          rep = grad_check(net.params, [&](Tape& t, std::span<const Var> v) {
            return csf_repr_loss(t, net, v, b, neg, 5.0, in_batch);
          }, 1e-4, rng.next_u64());
        else {
          const double lambda = rng.uniform(0.5, 30.0);
          rep = grad_check(net.params, [&](Tape& t, std::span<const Var> v) {
            return metra_repr_loss(t, net, v, b, lambda);
          }, 1e-4, rng.next_u64());
        }
      } else if (kind == 8) {
        const std::size_t obs = 2 + rng.index(3), act = 1 + rng.index(2), d = 2, n = 4 + rng.index(6);
        ParamSet psi = make_successor_net(obs, act, d, d, 4 + rng.index(6), 2, rng.next_u64());
        const Matrix o = randn(n, obs, rng), a = randn(n, act, rng), z = randn(n, d, rng), y = randn(n, d, rng);
        rep = grad_check(psi, [&](Tape& t, std::span<const Var> v) { return sf_td_loss(t, v, o, a, z, y); }, 1e-4,
                         rng.next_u64());
      } else {
        const std::size_t obs = 2 + rng.index(3), act = 1 + rng.index(2), d = 2, n = 4 + rng.index(6);
        ParamSet pi = make_policy_net(obs, d, act, 4 + rng.index(6), 2, rng.next_u64());
        const ParamSet psi = make_successor_net(obs, act, d, d, 8, 2, rng.next_u64());
        const Matrix o = randn(n, obs, rng), z = randn(n, d, rng), noise = randn(n, act, rng);
        const auto critic = frozen_successor(psi);
        const double alpha = rng.uniform(0.0, 0.5);
        rep = grad_check(pi, [&](Tape& t, std::span<const Var> v) {
          return actor_loss(t, v, critic, o, z, z, noise, alpha);
        }, 1e-4, rng.next_u64());
      }
      worst = std::max(worst, rep.max_rel_error);
      scalars += rep.checked;
      ++configs;
    }
    CheckResult r;
    r.id = 1;
    r.name = "gradient check";
    r.value = worst;
    r.criterion = "max rel err < 1e-4 over >= 100 configs";
    r.passed = worst < 1e-4 && configs >= 100;
    r.detail = std::to_string(configs) + " configs, " + std::to_string(scalars) + " scalars";
    return r;
  });
}

CheckResult check_log_partition(std::uint64_t seed) {
  return timed([&] {
    Rng rng(seed);
    double worst = 0.0;
    std::size_t agree = 0;
    for (std::size_t d : {2, 4, 8, 16})
      for (double norm : {0.1, 0.5, 1.0, 2.0}) {
        auto w = sample_uniform_sphere(d, rng).values;
        for (double& v : w) v *= norm;
        const McEstimate mc = log_partition_mc(w, 1000000, rng);
        const double z = std::abs(mc.estimate - log_partition(w)) / mc.standard_error;
        worst = std::max(worst, z);
        if (z < 3.0) ++agree;
      }
    const double spot = log_partition_norm(2, 1.0);
    CheckResult r;
    r.id = 2;
    r.name = "log-partition vs Monte Carlo";
    r.value = worst;
    r.criterion = "16/16 cells within 3 SE; spot 0.235914 +- 1e-6";
    r.passed = agree == 16 && std::abs(spot - 0.235914) < 1e-6;
    r.detail = std::to_string(agree) + "/16 cells, spot " + num(spot);
    return r;
  });
}

CheckResult check_quadratic_slope(std::uint64_t seed) {
  return timed([&] {
    Rng rng(seed);
    Matrix w(5000, 2);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      const auto u = sample_uniform_sphere(2, rng).values;
      const double radius = 1.2 * std::sqrt(rng.uniform());
      w(i, 0) = radius * u[0];
      w(i, 1) = radius * u[1];
    }
    const LinearFit fit = fit_log_partition_slope(w);
    CheckResult r;
    r.id = 3;
    r.name = "quadratic approximation slope";
    r.value = fit.slope;
    r.criterion = "slope in [0.21, 0.26]";
    r.passed = fit.slope >= 0.21 && fit.slope <= 0.26;
    r.detail = "intercept " + num(fit.intercept) + ", n " + std::to_string(fit.n);
    return r;
  });
}

CheckResult check_line_graph() {
  return timed([&] {
    double farthest = 1.0;
    std::size_t inside = 0;
    std::string values;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(seed);
      const ReprBatch data = make_line_graph_data(9, 16, rng);
      const LineGraphFit fit = fit_line_graph(ReprObjective::metra_dual, data, seed);
      if (std::abs(fit.e_sq_norm - 1.0) > std::abs(farthest - 1.0)) farthest = fit.e_sq_norm;
      if (fit.e_sq_norm >= 0.9 && fit.e_sq_norm <= 1.1) ++inside;
      values += (values.empty() ? "" : " ") + num(fit.e_sq_norm);
    }
    CheckResult r;
    r.id = 4;
    r.name = "dual objective optimum on the line graph";
    r.value = farthest;
    r.criterion = "E|dphi|^2 in [0.9, 1.1] for 5 seeds";
    r.passed = inside == 5;
    r.detail = "per seed: " + values;
    return r;
  });
}

CheckResult check_successor_features(std::uint64_t seed) {
  return timed([&] {
    const ChainSfProblem p = make_chain_sf_problem(5, 0.9, seed);
    const ParamSet psi = train_chain_sf(p, seed);
    const double td_err = sf_oracle_check(chain_successor_table(psi, p), p.states, p.policy, p.features, p.gamma);

    const auto oracle = chain_sf_oracle(p.states, p.policy, p.features, p.gamma);
    std::vector<std::vector<double>> reward(p.states, std::vector<double>(kChainActions));
    for (std::size_t s = 0; s < p.states; ++s)
      for (std::size_t a = 0; a < kChainActions; ++a) reward[s][a] = dot(p.features[s][a], p.z);
    const auto q = chain_value_iteration(p.states, p.policy, reward, p.gamma);
    double vi_err = 0.0;
    for (std::size_t s = 0; s < p.states; ++s)
      for (std::size_t a = 0; a < kChainActions; ++a) vi_err = std::max(vi_err, std::abs(dot(oracle[s][a], p.z) - q[s][a]));

    CheckResult r;
    r.id = 5;
    r.name = "successor features vs dynamic programming";
    r.value = td_err;
    r.criterion = "TD max abs err < 0.05; psi.z vs VI < 1e-9";
    r.passed = td_err < 0.05 && vi_err < 1e-9;
    r.detail = "psi.z vs VI " + num(vi_err);
    return r;
  });
}

CheckResult check_shell_vmf(std::uint64_t seed) {
  return timed([&] {
    Rng rng(seed);
    const std::vector<double> mu{0.6, 0.0, 0.8};
    const double sigma = 0.5;
    const ShellSample s = sample_gaussian_shell(mu, sigma, 0.02, 100000, rng);
    const VmfParams vmf{{0.6, 0.0, 0.8}, 1.0 / (sigma * sigma)};
    const GoodnessOfFit g = vmf_cosine_chi_square(s.directions, vmf);
    CheckResult r;
    r.id = 6;
    r.name = "shell-restricted Gaussian is von Mises-Fisher";
    r.value = g.p_value;
    r.criterion = "chi-square p > 0.01 at 1e5 samples";
    r.passed = g.p_value > 0.01;
    r.detail = "chi2 " + num(g.statistic) + " on " + std::to_string(g.dof) + " dof, " +
               std::to_string(s.proposals) + " proposals";
    return r;
  });
}

CheckResult check_diagnostics(std::uint64_t seed) {
  return timed([&] {
    Rng rng(seed);
    const std::size_t n = 10000;
    const Matrix z = sample_skills(SkillMode::continuous, 2, n, rng);
    Matrix dphi = z;
    for (double& v : dphi.values()) v += 0.1 * rng.normal();
    const ReprDiagnostics good = repr_diagnostics(dphi, z);

    // vMF(kappa = 8) on the circle by rejection from the uniform angle.
    Matrix conc(n, 2);
    for (std::size_t i = 0; i < n;) {
      const double t = rng.uniform(-std::numbers::pi, std::numbers::pi);
      if (rng.uniform() < std::exp(8.0 * (std::cos(t) - 1.0))) {
        conc(i, 0) = std::cos(t);
        conc(i, 1) = std::sin(t);
        ++i;
      }
    }
    const ReprDiagnostics bad = repr_diagnostics(conc, z);

    CheckResult r;
    r.id = 7;
    r.name = "diagnostics on constructed data";
    r.value = bad.mean_resultant_length;
    r.criterion = "Gaussian residuals pass isotropy and uniformity; vMF(8) fails with Rbar > 0.3";
    r.passed = good.isotropic && good.uniform && !bad.uniform && bad.mean_resultant_length > 0.3;
    r.detail = "residual var gap " + num(good.residual_var_gap) + ", offdiag " + num(good.residual_offdiag) +
               ", Rbar " + num(good.mean_resultant_length);
    return r;
  });
}

CheckResult check_determinism(const std::string& scratch_dir) {
  return timed([&] {
    const fs::path root(scratch_dir);
    const fs::path a = root / "determinism_a", b = root / "determinism_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const TrainConfig c = tiny_point_mass();
    run_experiment(c, a.string());
    run_experiment(c, b.string());
    const bool same_csv = slurp(a / "metrics.csv") == slurp(b / "metrics.csv") && !slurp(a / "metrics.csv").empty();
    const bool same_ckpt = slurp(a / "checkpoints" / "final.skf") == slurp(b / "checkpoints" / "final.skf");

    Trainer straight(c);
    for (int k = 0; k < 3; ++k) straight.iterate();
    const std::string ckpt = (a / "resume.skf").string();
    straight.save(ckpt);
    Trainer resumed = Trainer::load(ckpt, c);
    std::size_t mismatched = 0;
    for (int k = 0; k < 3; ++k)
      if (metrics_csv_row(straight.iterate()) != metrics_csv_row(resumed.iterate())) ++mismatched;
    fs::remove_all(a);
    fs::remove_all(b);

    CheckResult r;
    r.id = 10;
    r.name = "determinism and resume";
    r.value = static_cast<double>(mismatched);
    r.criterion = "identical metrics.csv and checkpoint; 0 mismatched rows after resume";
    r.passed = same_csv && same_ckpt && mismatched == 0;
    r.detail = std::string("metrics.csv ") + (same_csv ? "identical" : "differs") + ", final.skf " +
               (same_ckpt ? "identical" : "differs");
    return r;
  });
}

std::vector<CheckResult> run_selftest(const std::string& scratch_dir,
                                      const std::function<void(const CheckResult&)>& on_result) {
  std::vector<CheckResult> out;
  auto add = [&](CheckResult r) {
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  };
  add(check_gradients());
  add(check_log_partition());
  add(check_quadratic_slope());
  add(check_line_graph());
  add(check_successor_features());
  add(check_shell_vmf());
  add(check_diagnostics());
  add(check_determinism(scratch_dir));
  return out;
}

std::string format_check(const CheckResult& r) {
  std::ostringstream s;
  s << (r.passed ? "PASS" : "FAIL") << " [" << r.id << "] " << r.name << ": " << num(r.value) << " (" << r.criterion
    << "; " << r.detail << "; " << num(r.seconds) << " s)";
  return s.str();
}

}  // namespace csf
