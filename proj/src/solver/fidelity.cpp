#include "lms/solver/fidelity.hpp"

#include <algorithm>
#include <cmath>

namespace lms::solver {

using core::InvalidArgument;
using core::NumericError;

void PrototypePair::validate() const {
  if (l1.empty() || l1.size() != l2.size()) throw InvalidArgument("prototype pair dimension mismatch");
  if (kernel::norm(l1) == 0.0 || kernel::norm(l2) == 0.0) throw InvalidArgument("degenerate prototype");
}

void SolverConfig::validate() const {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (!(beta1 > 0.0) || !(beta2 > 0.0)) throw InvalidArgument("beta must be positive");
  if (!(cosine_eps > 0.0)) throw InvalidArgument("cosine_eps must be positive");
}

namespace kernel {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double rho(std::span<const double> f, std::span<const double> l, double l_norm, double eps) {
  const double f_norm = std::max(norm(f), eps);
  return -dot(f, l) / (f_norm * l_norm);
}

void softmax2(double a, double b, double& out_a, double& out_b) {
  const double m = std::max(a, b);
  const double ea = std::exp(a - m);
  const double eb = std::exp(b - m);
  const double s = ea + eb;
  out_a = ea / s;
  out_b = eb / s;
}

}  // namespace kernel

ScalarGrid rho(const FeatureMap& features, std::span<const double> prototype, double eps) {
  if (static_cast<int>(prototype.size()) != features.channels())
    throw InvalidArgument("rho: prototype has " + std::to_string(prototype.size()) + " channels, features have " +
                          std::to_string(features.channels()));
  const double l_norm = kernel::norm(prototype);
  if (l_norm == 0.0) throw InvalidArgument("degenerate prototype");
  ScalarGrid out(features.shape(), 1);
  for (std::size_t p = 0; p < features.shape().pixels(); ++p)
    out.at(p, 0) = kernel::rho(features.pixel(p), prototype, l_norm, eps);
  return out;
}

SoftMask data_consistency(const FeatureMap& features, const PrototypePair& l, const DualField& v,
                          const SolverConfig& cfg) {
  cfg.validate();
  l.validate();
  if (!(v.shape() == features.shape()) || v.channels() != 2)
    throw InvalidArgument("data_consistency: dual field shape " + v.shape().str() + " does not match features " +
                          features.shape().str());
  const ScalarGrid rho1 = rho(features, l.l1, cfg.cosine_eps);
  const ScalarGrid rho2 = rho(features, l.l2, cfg.cosine_eps);
  SoftMask u(features.shape(), 2);
  for (std::size_t p = 0; p < features.shape().pixels(); ++p) {
    const double a = kernel::dc_logit(cfg.alpha, rho1.at(p, 0), v.at(p, 0));
    const double b = kernel::dc_logit(cfg.alpha, rho2.at(p, 0), v.at(p, 1));
    if (!std::isfinite(a) || !std::isfinite(b)) throw NumericError("data_consistency: non-finite logit");
    kernel::softmax2(a, b, u.at(p, 0), u.at(p, 1));
  }
  return u;
}

std::vector<double> map_pool(const FeatureMap& features, const ScalarGrid& weights, double beta) {
  if (!(weights.shape() == features.shape())) throw InvalidArgument("map_pool: weight grid shape mismatch");
  const int c = features.channels();
  std::vector<double> acc(c, 0.0);
  double mass = 0.0;
  for (std::size_t p = 0; p < features.shape().pixels(); ++p) {
    const double w = weights.at(p, 0);
    if (w < 0.0) throw InvalidArgument("map_pool: negative weight");
    mass += w;
    const auto f = features.pixel(p);
    for (int k = 0; k < c; ++k) acc[k] += f[k] * w;
  }
  if (mass <= kEmptyRegionMass) throw InvalidArgument("empty region");
  for (auto& a : acc) a = beta * (a / mass);
  return acc;
}

}  // namespace lms::solver
