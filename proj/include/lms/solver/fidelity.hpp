#pragma once

#include <span>
#include <vector>

#include "lms/core/grid.hpp"

namespace lms::solver {

using core::DualField;
using core::FeatureMap;
using core::GridShape;
using core::ScalarGrid;
using core::SoftMask;

/// Foreground / background prototypes in feature space.
struct PrototypePair {
  std::vector<double> l1;
  std::vector<double> l2;

  int channels() const { return static_cast<int>(l1.size()); }
  /// Throws unless both prototypes share a dimension and have nonzero norm.
  void validate() const;
};

struct SolverConfig {
  double alpha = 20.0;
  double beta1 = 1.0;
  double beta2 = 1.0;
  double cosine_eps = 1e-8;

  void validate() const;
};

// Pixel kernels. Both the plain solver and the differentiable pipeline call
// these, so results agree bit for bit between the two paths.
namespace kernel {

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// -<f, l> / (max(|f|, eps) |l|)
double rho(std::span<const double> f, std::span<const double> l, double l_norm, double eps);

/// Data-consistency logit alpha * (-rho - v).
inline double dc_logit(double alpha, double rho, double v) { return alpha * (-rho - v); }

/// Two-way softmax with max subtraction.
void softmax2(double a, double b, double& out_a, double& out_b);

}  // namespace kernel

/// Cosine-distance fidelity map rho(l, x) over the grid.
ScalarGrid rho(const FeatureMap& features, std::span<const double> prototype, double eps = 1e-8);

/// Closed-form minimizer of the entropic u-subproblem:
/// u = softmax(alpha * (-rho(l, x) - v(x))) over the two channels.
SoftMask data_consistency(const FeatureMap& features, const PrototypePair& l, const DualField& v,
                          const SolverConfig& cfg);

/// Masked average pooling beta * sum_x F(x) w(x) / sum_x w(x).
/// Throws "empty region" when the total weight is <= 1e-12.
std::vector<double> map_pool(const FeatureMap& features, const ScalarGrid& weights, double beta = 1.0);

inline constexpr double kEmptyRegionMass = 1e-12;

}  // namespace lms::solver
