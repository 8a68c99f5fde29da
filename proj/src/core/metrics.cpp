#include "lms/core/metrics.hpp"

#include <cmath>

namespace lms::core {

namespace {

double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

void require_two_channels(const SoftMask& u) {
  if (u.channels() != 2) throw InvalidArgument("soft mask must have exactly two channels");
}

}  // namespace

bool validate_simplex(const SoftMask& u) {
  if (u.channels() != 2) return false;
  for (std::size_t p = 0; p < u.shape().pixels(); ++p) {
    const double a = u.at(p, 0);
    const double b = u.at(p, 1);
    if (!std::isfinite(a) || !std::isfinite(b)) return false;
    if (a < -kSimplexNegTol || b < -kSimplexNegTol) return false;
    if (std::abs(a + b - 1.0) > kSimplexSumTol) return false;
  }
  return true;
}

ScalarGrid entropy_map(const SoftMask& u) {
  require_two_channels(u);
  ScalarGrid out(u.shape(), 1);
  for (std::size_t p = 0; p < u.shape().pixels(); ++p)
    out.at(p, 0) = -(xlogx(u.at(p, 0)) + xlogx(u.at(p, 1)));
  return out;
}

BinaryMask binarize(const SoftMask& u) {
  require_two_channels(u);
  BinaryMask out(u.shape());
  for (std::size_t p = 0; p < u.shape().pixels(); ++p) {
    const double gap = u.at(p, 0) - u.at(p, 1);
    out.set(p, gap > kTieTol);
  }
  return out;
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
  if (!(pred.shape() == gt.shape()))
    throw InvalidArgument("dice: shape mismatch " + pred.shape().str() + " vs " + gt.shape().str());
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t p = 0; p < pred.shape().pixels(); ++p) {
    a += pred.at(p);
    b += gt.at(p);
    inter += pred.at(p) & gt.at(p);
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

}  // namespace lms::core
