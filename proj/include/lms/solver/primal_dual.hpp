#pragma once

#include <memory>
#include <string>

#include "lms/solver/fidelity.hpp"

namespace lms::solver {

/// Stand-in for the proximal map of the prior. Implementations must be
/// safe for concurrent const use.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  /// Maps a two-channel field to one of identical shape.
  virtual DualField apply(const DualField& z) const = 0;
  virtual std::string name() const = 0;
};

class IdentityDenoiser final : public Denoiser {
 public:
  DualField apply(const DualField& z) const override { return z; }
  std::string name() const override { return "identity"; }
};

/// z -> c everywhere. Mostly useful in tests.
class ConstantDenoiser final : public Denoiser {
 public:
  explicit ConstantDenoiser(double value) : value_(value) {}
  DualField apply(const DualField& z) const override;
  std::string name() const override { return "constant"; }

 private:
  double value_;
};

double softplus(double x);
/// Inverse of softplus, for initializing a raw parameter to a given step.
double softplus_inverse(double y);

/// One unfolded primal-dual stage. The effective step is softplus(delta_raw).
struct StageParams {
  double delta_raw = softplus_inverse(1.0);
  std::shared_ptr<const Denoiser> denoiser = std::make_shared<IdentityDenoiser>();

  double delta() const { return softplus(delta_raw); }
  static StageParams with_delta(double delta, std::shared_ptr<const Denoiser> d);
};

/// Moreau-decomposition dual step, per channel:
///   v = delta * u + v_prev - delta * D(u + v_prev / delta)
DualField dual_update(const SoftMask& u, const DualField& v_prev, const StageParams& stage);

}  // namespace lms::solver
