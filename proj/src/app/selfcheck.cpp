#include "lms/app/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "lms/app/synthetic.hpp"
#include "lms/core/metrics.hpp"
#include "lms/proto/prototypes.hpp"
#include "lms/solver/potts.hpp"
#include "lms/training/grad_check.hpp"

namespace lms::app {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

CheckResult check(std::string name, double tol, double observed, std::string detail = {}) {
  return {std::move(name), tol, observed, observed <= tol, std::move(detail)};
}

core::FeatureMap random_features(GridShape s, int c, std::mt19937_64& rng) {
  core::FeatureMap f(s, c);
  for (double& x : f.values()) x = uniform(rng, -1.0, 1.0);
  return f;
}

std::vector<double> random_vector(int c, std::mt19937_64& rng) {
  std::vector<double> v(static_cast<std::size_t>(c));
  for (double& x : v) x = uniform(rng, -1.0, 1.0);
  return v;
}

CheckResult simplex_check(std::mt19937_64& rng) {
  double worst = 0.0;
  for (double alpha : {1.0, 20.0, 200.0}) {
    solver::SolverConfig cfg;
    cfg.alpha = alpha;
    const auto f = random_features(GridShape(8, 8), 4, rng);
    core::DualField v(f.shape(), 2);
    for (double& x : v.values()) x = uniform(rng, -2.0, 2.0);
    const auto u = solver::data_consistency(f, {random_vector(4, rng), random_vector(4, rng)}, v, cfg);
    for (std::size_t p = 0; p < u.shape().pixels(); ++p) {
      worst = std::max(worst, std::abs(u.at(p, 0) + u.at(p, 1) - 1.0));
      if (u.at(p, 0) < 0.0 || u.at(p, 1) < 0.0) worst = std::max(worst, 1.0);
    }
  }
  return check("simplex", 1e-9, worst, "max |u1 + u2 - 1| over DC outputs");
}

CheckResult dc_oracle_check(std::mt19937_64& rng) {
  double worst = 0.0;
  for (double alpha : {1.0, 5.0, 20.0}) {
    solver::SolverConfig cfg;
    cfg.alpha = alpha;
    const auto f = random_features(GridShape(10, 10), 3, rng);
    core::DualField v(f.shape(), 2);
    for (double& x : v.values()) x = uniform(rng, -0.5, 0.5);
    const solver::PrototypePair l{random_vector(3, rng), random_vector(3, rng)};
    const auto u = solver::data_consistency(f, l, v, cfg);
    const auto r1 = solver::rho(f, l.l1), r2 = solver::rho(f, l.l2);
    for (std::size_t p = 0; p < f.shape().pixels(); ++p) {
      const double best = brute_force_u1(r1.at(p, 0) + v.at(p, 0), r2.at(p, 0) + v.at(p, 1), alpha, 1e-3);
      worst = std::max(worst, std::abs(best - u.at(p, 0)));
    }
  }
  return check("dc_vs_bruteforce", 1e-3, worst, "max |u1 - grid argmin|, 100 pixels x alpha {1,5,20}");
}

CheckResult identity_dual_check(std::mt19937_64& rng) {
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const GridShape s(6, 6);
    core::SoftMask u(s, 2);
    core::DualField v(s, 2);
    for (std::size_t p = 0; p < s.pixels(); ++p) {
      const double a = uniform(rng, 0.0, 1.0);
      u.at(p, 0) = a;
      u.at(p, 1) = 1.0 - a;
      v.at(p, 0) = uniform(rng, -1.0, 1.0);
      v.at(p, 1) = uniform(rng, -1.0, 1.0);
    }
    const auto stage = solver::StageParams::with_delta(uniform(rng, 0.05, 5.0),
                                                      std::make_shared<solver::IdentityDenoiser>());
    const auto out = solver::dual_update(u, v, stage);
    for (double x : out.values()) worst = std::max(worst, std::abs(x));
  }
  return check("identity_zero_dual", 1e-12, worst, "max |v| with identity denoiser, 50 triples");
}

CheckResult energy_check(std::uint64_t seed) {
  const SyntheticCorpusConfig cfg = separable_config(0.0, seed);
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Instance inst = make_instance(cfg, kSeparableClass, i);
    const auto f = solver::intensity_features(inst.image);
    const ScalarGrid fg = inst.mask.as_scalar();
    ScalarGrid bg = core::make_scalar(fg.shape());
    for (std::size_t p = 0; p < fg.shape().pixels(); ++p) bg.at(p, 0) = 1.0 - fg.at(p, 0);
    const solver::PrototypePair l{solver::map_pool(f, fg), solver::map_pool(f, bg)};
    const auto r = solver::reference_potts_solve(f, l, {}, 0.5);
    for (std::size_t k = 3; k < r.energy_trace.size(); ++k)
      worst = std::max(worst, r.energy_trace[k] - r.energy_trace[k - 1]);
  }
  return check("energy_monotone", 1e-6, worst, "max per-step energy increase after 2 burn-in steps, noiseless separable images");
}

CheckResult zero_init_check(std::uint64_t seed) {
  training::ModelConfig cfg;
  cfg.flms_mode = true;
  cfg.seed = seed;
  const training::ParamStore params = training::init_params(cfg);
  SyntheticCorpusConfig data;
  data.seed = seed;
  const Instance s = make_instance(data, 0, 0), q = make_instance(data, 0, 1);
  proto::Episode ep{s.image, s.mask, q.image, q.mask, 0};
  const auto r = training::lms_forward(ep, params, cfg);
  const auto fs = nn::feature_extract(ep.support_image, params);
  const auto fq = nn::feature_extract(ep.query_image, params);
  const auto u0 = proto::init_mask(fq, proto::support_prototypes(fs, ep.support_mask), cfg.solver());
  double differing = 0.0;
  for (std::size_t i = 0; i < u0.data().size(); ++i)
    if (u0.data()[i] != r.u_final.data()[i]) differing += 1.0;
  return check("zero_init_identity", 0.0, differing, "entries where lms_forward differs from init_mask");
}

}  // namespace

double brute_force_u1(double a1, double a2, double alpha, double step) {
  const auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  const int n = static_cast<int>(std::lround(1.0 / step));
  double best_u = 0.0, best_e = INFINITY;
  for (int i = 0; i <= n; ++i) {
    const double u1 = static_cast<double>(i) / n, u2 = 1.0 - u1;
    const double e = u1 * a1 + u2 * a2 + (xlogx(u1) + xlogx(u2)) / alpha;
    if (e < best_e) {
      best_e = e;
      best_u = u1;
    }
  }
  return best_u;
}

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  std::vector<CheckResult> out;
  out.push_back(simplex_check(rng));
  out.push_back(dc_oracle_check(rng));
  out.push_back(identity_dual_check(rng));
  out.push_back(energy_check(opts.seed));
  out.push_back(zero_init_check(opts.seed));
  training::GradCheckOptions g;
  g.analytic_perturbation = opts.grad_perturbation;
  for (const std::string& op : training::grad_check_ops()) {
    const auto r = training::grad_check(op, opts.grad_trials, opts.seed, g);
    char detail[64];
    std::snprintf(detail, sizeof detail, "%zu probes, %zu non-smooth, %zu below resolution", r.entries_checked,
                  r.nonsmooth_skipped, r.below_resolution);
    out.push_back(check("grad_" + op, g.tolerance, r.max_rel_error, detail));
  }
  return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::string format_report(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %-26s %-10s %-12s %s\n", "status", "check", "tolerance", "observed", "detail");
  os << line;
  for (const CheckResult& r : results) {
    std::snprintf(line, sizeof line, "%-6s %-26s %-10.3g %-12.4g %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                  r.tolerance, r.observed, r.detail.c_str());
    os << line;
  }
  std::snprintf(line, sizeof line, "%zu/%zu checks passed\n",
                static_cast<std::size_t>(std::count_if(results.begin(), results.end(),
                                                       [](const CheckResult& r) { return r.passed; })),
                results.size());
  os << line;
  return os.str();
}

}  // namespace lms::app
