#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lms::app {

struct CheckResult {
  std::string name;
  double tolerance = 0.0;
  double observed = 0.0;
  bool passed = false;
  std::string detail;
};

struct SelfcheckOptions {
  std::uint64_t seed = 7;
  int grad_trials = 2;
  /// Added to every analytic gradient entry; nonzero values must make the
  /// gradient checks fail.
  double grad_perturbation = 0.0;
};

/// Per-pixel argmin over a grid of the two-phase entropic integrand
/// u1 a1 + u2 a2 + (1/alpha)(u1 ln u1 + u2 ln u2), u2 = 1 - u1, with
/// a_i = rho_i + v_i.
double brute_force_u1(double a1, double a2, double alpha, double step);

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& opts = {});
std::string format_report(const std::vector<CheckResult>& results);
bool all_passed(const std::vector<CheckResult>& results);

}  // namespace lms::app
