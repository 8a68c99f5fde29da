#include "lms/solver/potts.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "lms/core/metrics.hpp"
#include "lms/core/tensor_io.hpp"

namespace lms::solver {

using core::InvalidArgument;

namespace {

// TV prox that warm starts each channel from the previous call. Consecutive
// outer iterations solve nearby ROF problems, so the carried dual converges
// across calls. One instance per solve; not shareable between threads.
class WarmTvDenoiser final : public Denoiser {
 public:
  WarmTvDenoiser(double weight, int iters) : weight_(weight), iters_(iters) {}
  DualField apply(const DualField& z) const override {
    state_.resize(static_cast<std::size_t>(z.channels()));
    DualField out(z.shape(), z.channels());
    for (int c = 0; c < z.channels(); ++c) {
      const ScalarGrid s = tv_prox(core::channel_of(z, c), weight_, iters_, state_[static_cast<std::size_t>(c)]);
      for (std::size_t p = 0; p < z.shape().pixels(); ++p) out.at(p, c) = s.at(p, 0);
    }
    return out;
  }
  std::string name() const override { return "tv_prox_warm"; }

 private:
  double weight_;
  int iters_;
  mutable std::vector<TvDualState> state_;
};

}  // namespace

double lms_energy(const FeatureMap& features, const SoftMask& u, const PrototypePair& l, const SolverConfig& cfg,
                  double tv_weight) {
  cfg.validate();
  if (!core::validate_simplex(u)) throw InvalidArgument("lms_energy: u is not on the simplex");
  if (!(u.shape() == features.shape())) throw InvalidArgument("lms_energy: shape mismatch");
  const ScalarGrid rho1 = rho(features, l.l1, cfg.cosine_eps);
  const ScalarGrid rho2 = rho(features, l.l2, cfg.cosine_eps);
  const double inv_alpha = 1.0 / cfg.alpha;
  double e = 0.0;
  for (std::size_t p = 0; p < u.shape().pixels(); ++p) {
    const double a = u.at(p, 0), b = u.at(p, 1);
    e += a * rho1.at(p, 0) + b * rho2.at(p, 0);
    if (a > 0.0) e += inv_alpha * a * std::log(a);
    if (b > 0.0) e += inv_alpha * b * std::log(b);
  }
  if (tv_weight != 0.0)
    e += tv_weight * (total_variation(core::channel_of(u, 0)) + total_variation(core::channel_of(u, 1)));
  return e;
}

PottsResult reference_potts_solve(const FeatureMap& features, const PrototypePair& l, const SolverConfig& cfg,
                                  double tv_weight, const PottsOptions& opts, const IterateCallback& on_iterate) {
  if (opts.outer_iters < 1) throw InvalidArgument("reference_potts_solve: outer_iters must be >= 1");
  if (tv_weight < 0.0) throw InvalidArgument("reference_potts_solve: tv_weight must be >= 0");
  if (!(opts.delta > 0.0)) throw InvalidArgument("reference_potts_solve: delta must be positive");

  // prox of (1/delta) * tv_weight * TV is ROF with weight tv_weight / delta.
  const StageParams stage =
      StageParams::with_delta(opts.delta, std::make_shared<WarmTvDenoiser>(tv_weight / opts.delta, opts.tv_iters));

  PottsResult r;
  r.v = core::make_dual(features.shape());
  if (on_iterate) on_iterate(0, data_consistency(features, l, r.v, cfg), r.v);
  SoftMask prev;
  for (int k = 1; k <= opts.outer_iters; ++k) {
    r.u = data_consistency(features, l, r.v, cfg);
    r.energy_trace.push_back(lms_energy(features, r.u, l, cfg, tv_weight));
    r.iterations = k;
    bool converged = false;
    if (k > 1) {
      double change = 0.0;
      for (std::size_t i = 0; i < r.u.values().size(); ++i)
        change = std::max(change, std::abs(r.u.values()[i] - prev.values()[i]));
      converged = change < opts.stop_tol;
    }
    if (converged || k == opts.outer_iters) {
      if (on_iterate) on_iterate(k, r.u, r.v);
      break;
    }
    prev = r.u;
    r.v = dual_update(r.u, r.v, stage);
    if (on_iterate) on_iterate(k, r.u, r.v);
  }
  return r;
}

FeatureMap intensity_features(const ScalarGrid& image) {
  FeatureMap f(image.shape(), 2);
  for (std::size_t p = 0; p < image.shape().pixels(); ++p) {
    f.at(p, 0) = image.at(p, 0);
    f.at(p, 1) = 1.0 - image.at(p, 0);
  }
  return f;
}

void write_energy_csv(const std::filesystem::path& path, const std::vector<double>& trace) {
  std::ofstream os(path);
  if (!os) throw core::IoError("cannot open " + path.string());
  os << "iteration,energy\n";
  char buf[64];
  for (std::size_t k = 0; k < trace.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k + 1, trace[k]);
    os << buf;
  }
}

}  // namespace lms::solver
