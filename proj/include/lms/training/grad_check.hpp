#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lms/training/model.hpp"

namespace lms::training {

struct GradCheckOptions {
  double step = 1e-5;
  /// Entries probed per tensor per trial; tensors this size or smaller are
  /// checked exhaustively.
  int entries_per_tensor = 6;
  /// Added to every analytic gradient entry before comparison. Only used to
  /// confirm that the checker notices a wrong gradient.
  double analytic_perturbation = 0.0;
  /// Relative error above which a probe is re-examined for non-smoothness.
  double tolerance = 1e-4;
  /// Probes whose analytic and numeric values are both below this times
  /// max(1, |loss|) are not scored: central differences cannot resolve them.
  double resolution_floor = 1e-5;
};

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  /// Probes whose stencil straddles a kink or discontinuity.
  std::size_t nonsmooth_skipped = 0;
  std::size_t below_resolution = 0;
  std::string worst_entry;
};

double relative_error(double analytic, double numeric);

std::vector<std::string> grad_check_ops();

/// Randomized analytic-vs-central-difference comparison. Throws
/// InvalidArgument for an unknown op.
GradCheckReport grad_check(const std::string& op, int trials, std::uint64_t seed, const GradCheckOptions& opts = {});

}  // namespace lms::training
