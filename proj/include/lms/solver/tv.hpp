#pragma once

#include "lms/solver/primal_dual.hpp"

namespace lms::solver {

/// Anisotropic total variation with forward differences and replicate
/// (Neumann) boundary: sum |u(y,x+1)-u(y,x)| + |u(y+1,x)-u(y,x)|.
double total_variation(const ScalarGrid& u);

/// Approximate ROF solution argmin_v 1/2 |v - z|^2 + weight * TV(v) by
/// projected gradient on the dual (Chambolle's projection scheme adapted to
/// the anisotropic norm, step 1/8). weight == 0 returns z unchanged.
ScalarGrid tv_prox(const ScalarGrid& z, double weight, int iters);

/// Dual edge variables of the projection scheme, kept between calls so that a
/// sequence of nearby prox problems can be warm started.
struct TvDualState {
  std::vector<double> px, py;
};

/// tv_prox starting from (and updating) `state`. An empty or mismatched state
/// starts from zero.
ScalarGrid tv_prox(const ScalarGrid& z, double weight, int iters, TvDualState& state);

/// Denoiser that applies tv_prox channel by channel.
class TvDenoiser final : public Denoiser {
 public:
  TvDenoiser(double weight, int iters);
  DualField apply(const DualField& z) const override;
  std::string name() const override { return "tv_prox"; }
  double weight() const { return weight_; }

 private:
  double weight_;
  int iters_;
};

}  // namespace lms::solver
