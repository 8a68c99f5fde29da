#include "lms/solver/tv.hpp"

#include <algorithm>
#include <cmath>

namespace lms::solver {

using core::InvalidArgument;

double total_variation(const ScalarGrid& u) {
  const int h = u.height(), w = u.width();
  double tv = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double c = u.at(y, x);
      if (x + 1 < w) tv += std::abs(u.at(y, x + 1) - c);
      if (y + 1 < h) tv += std::abs(u.at(y + 1, x) - c);
    }
  return tv;
}

ScalarGrid tv_prox(const ScalarGrid& z, double weight, int iters) {
  TvDualState cold;
  return tv_prox(z, weight, iters, cold);
}

ScalarGrid tv_prox(const ScalarGrid& z, double weight, int iters, TvDualState& state) {
  if (weight < 0.0) throw InvalidArgument("tv_prox: weight must be >= 0");
  if (iters < 1) throw InvalidArgument("tv_prox: iters must be >= 1");
  if (weight == 0.0) return z;

  const int h = z.height(), w = z.width();
  const std::size_t n = z.shape().pixels();
  constexpr double kStep = 0.125;
  if (state.px.size() != n || state.py.size() != n) {
    state.px.assign(n, 0.0);
    state.py.assign(n, 0.0);
  }
  std::vector<double>& px = state.px;
  std::vector<double>& py = state.py;
  std::vector<double> q(n, 0.0);
  const double inv_w = 1.0 / weight;

  // q = div p + z / weight; the primal solution is z + weight * div p.
  auto compute_q = [&] {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = z.shape().index(y, x);
        double div = 0.0;
        if (x + 1 < w) div += px[i];
        if (x > 0) div -= px[i - 1];
        if (y + 1 < h) div += py[i];
        if (y > 0) div -= py[i - w];
        q[i] = div + z.at(i, 0) * inv_w;
      }
  };

  for (int it = 0; it < iters; ++it) {
    compute_q();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = z.shape().index(y, x);
        if (x + 1 < w) px[i] = std::clamp(px[i] + kStep * (q[i + 1] - q[i]), -1.0, 1.0);
        if (y + 1 < h) py[i] = std::clamp(py[i] + kStep * (q[i + w] - q[i]), -1.0, 1.0);
      }
  }
  compute_q();
  ScalarGrid out(z.shape(), 1);
  for (std::size_t i = 0; i < n; ++i) out.at(i, 0) = weight * q[i];
  return out;
}

TvDenoiser::TvDenoiser(double weight, int iters) : weight_(weight), iters_(iters) {
  if (weight < 0.0 || iters < 1) throw InvalidArgument("TvDenoiser: invalid weight or iteration count");
}

DualField TvDenoiser::apply(const DualField& z) const {
  DualField out(z.shape(), z.channels());
  for (int c = 0; c < z.channels(); ++c) {
    const ScalarGrid smoothed = tv_prox(core::channel_of(z, c), weight_, iters_);
    for (std::size_t p = 0; p < z.shape().pixels(); ++p) out.at(p, c) = smoothed.at(p, 0);
  }
  return out;
}

}  // namespace lms::solver
