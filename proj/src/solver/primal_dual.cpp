#include "lms/solver/primal_dual.hpp"

#include <cmath>

namespace lms::solver {

using core::InvalidArgument;
using core::NumericError;

DualField ConstantDenoiser::apply(const DualField& z) const {
  return DualField(z.shape(), z.channels(), value_);
}

double softplus(double x) {
  // log(1 + e^x) without overflow for large x.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InvalidArgument("softplus_inverse needs a positive argument");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

StageParams StageParams::with_delta(double delta, std::shared_ptr<const Denoiser> d) {
  StageParams s;
  s.delta_raw = softplus_inverse(delta);
  s.denoiser = std::move(d);
  return s;
}

DualField dual_update(const SoftMask& u, const DualField& v_prev, const StageParams& stage) {
  if (!(u.shape() == v_prev.shape()) || u.channels() != 2 || v_prev.channels() != 2)
    throw InvalidArgument("dual_update: shape mismatch");
  if (!stage.denoiser) throw InvalidArgument("dual_update: no denoiser");
  const double delta = stage.delta();
  if (!(delta > 0.0)) throw InvalidArgument("dual_update: step must be positive");

  DualField z(u.shape(), 2);
  for (std::size_t p = 0; p < u.shape().pixels(); ++p)
    for (int i = 0; i < 2; ++i) z.at(p, i) = u.at(p, i) + v_prev.at(p, i) / delta;

  const DualField d = stage.denoiser->apply(z);
  if (!(d.shape() == z.shape()) || d.channels() != 2)
    throw InvalidArgument("denoiser '" + stage.denoiser->name() + "' changed the field shape");

  DualField v(u.shape(), 2);
  for (std::size_t p = 0; p < u.shape().pixels(); ++p)
    for (int i = 0; i < 2; ++i) {
      v.at(p, i) = (delta * u.at(p, i) + v_prev.at(p, i)) - delta * d.at(p, i);
      if (!std::isfinite(v.at(p, i))) throw NumericError("dual_update: non-finite dual value");
    }
  return v;
}

}  // namespace lms::solver
