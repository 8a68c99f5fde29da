#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "lms/solver/tv.hpp"

namespace lms::solver {

/// Entropic two-phase Potts energy with a handcrafted TV prior:
///   sum_i sum_x [u_i rho(l_i, x) + (1/alpha) u_i ln u_i] + tv_weight * sum_i TV(u_i)
/// Only defined for the TV prior; a learned denoiser has no evaluable energy.
double lms_energy(const FeatureMap& features, const SoftMask& u, const PrototypePair& l, const SolverConfig& cfg,
                  double tv_weight);

struct PottsOptions {
  int outer_iters = 50;
  /// Fixed dual step. The dual gradient is (alpha/2)-Lipschitz, so steps
  /// above 4/alpha oscillate; 0.1 sits inside that bound for alpha = 20.
  double delta = 0.1;
  /// Inner iterations per prox call, warm started across outer iterations.
  int tv_iters = 100;
  /// Stop once max |u^k - u^{k-1}| drops below this.
  double stop_tol = 1e-5;
};

struct PottsResult {
  SoftMask u;
  DualField v;
  std::vector<double> energy_trace;
  int iterations = 0;
};

using IterateCallback = std::function<void(int k, const SoftMask& u, const DualField& v)>;

/// Alternates data_consistency and dual_update with a TV-prox denoiser (the
/// fixed-prototype unfolded Potts scheme run to convergence).
PottsResult reference_potts_solve(const FeatureMap& features, const PrototypePair& l, const SolverConfig& cfg,
                                  double tv_weight, const PottsOptions& opts = {},
                                  const IterateCallback& on_iterate = {});

/// Two-channel intensity features (I, 1 - I) for running the classical solver
/// directly on an image.
FeatureMap intensity_features(const ScalarGrid& image);

void write_energy_csv(const std::filesystem::path& path, const std::vector<double>& trace);

}  // namespace lms::solver
