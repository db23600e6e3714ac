#pragma once

// The built-in oracle suite behind `csf selftest`: each check compares the
// library against an independent reference and reports one number against
// a pinned threshold.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace csf {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double value = 0.0;     // the headline statistic
  std::string criterion;  // what `value` was compared against
  std::string detail;
  double seconds = 0.0;
};

/// Backward pass vs central differences on 120 random configurations
/// spanning MLP heads, the contrastive and dual representation losses, the
/// TD loss and the actor loss. Value: max relative error.
CheckResult check_gradients(std::uint64_t seed = 1);

/// Closed-form log-partition vs 1e6-sample Monte Carlo on 16 (d, |w|)
/// cells, plus the d = 2, |w| = 1 spot value. Value: worst |error| / SE.
CheckResult check_log_partition(std::uint64_t seed = 2);

/// Least-squares slope of log-partition against |w|^2 for |w| <= 1.2 at d = 2.
CheckResult check_quadratic_slope(std::uint64_t seed = 3);

/// Dual-objective fits on the 9-node line graph over 5 seeds. Value: the
/// E|dphi|^2 farthest from 1.
CheckResult check_line_graph();

/// TD-trained psi on the 5-state chain against dynamic programming, and
/// psi . z against value iteration. Value: max abs TD error.
CheckResult check_successor_features(std::uint64_t seed = 11);

/// Directions of N(mu, 0.25 I) restricted to a thin shell against vMF.
/// Value: chi-square p-value.
CheckResult check_shell_vmf(std::uint64_t seed = 4);

/// Isotropy and uniformity tests on constructed data: skill plus isotropic
/// noise must pass, vMF(kappa = 8) directions must fail. Value: Rbar of the
/// concentrated set.
CheckResult check_diagnostics(std::uint64_t seed = 7);

/// Two runs of one tiny configuration agree byte for byte, and a resumed
/// checkpoint reproduces the next iterations. Uses `scratch_dir`.
CheckResult check_determinism(const std::string& scratch_dir);

/// All of the above in order; `on_result` sees each as it finishes.
std::vector<CheckResult> run_selftest(const std::string& scratch_dir,
                                      const std::function<void(const CheckResult&)>& on_result = {});

std::string format_check(const CheckResult& r);

}  // namespace csf
