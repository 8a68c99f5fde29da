#include <doctest.h>

#include <cmath>
#include <random>

#include "lms/core/metrics.hpp"
#include "lms/solver/potts.hpp"

using namespace lms;
using namespace lms::solver;
using core::GridShape;

namespace {

FeatureMap random_features(GridShape s, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  FeatureMap f(s, c);
  for (double& x : f.values()) x = d(rng);
  return f;
}

DualField random_dual(GridShape s, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  DualField v(s, 2);
  for (double& x : v.values()) x = d(rng);
  return v;
}

SoftMask random_soft(GridShape s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  SoftMask u(s, 2);
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    u.at(p, 0) = d(rng);
    u.at(p, 1) = 1.0 - u.at(p, 0);
  }
  return u;
}

double naive_rho(const std::vector<double>& f, const std::vector<double>& l) {
  double fl = 0, ff = 0, ll = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    fl += f[i] * l[i];
    ff += f[i] * f[i];
    ll += l[i] * l[i];
  }
  return -fl / (std::max(std::sqrt(ff), 1e-8) * std::sqrt(ll));
}

// Grid search of u1 over {0, step, ..., 1} for the per-pixel integrand
// u1 a1 + u2 a2 + (u1 ln u1 + u2 ln u2) / alpha.
double grid_argmin(double a1, double a2, double alpha) {
  double best = 0.0, best_e = INFINITY;
  for (int i = 0; i <= 1000; ++i) {
    const double u1 = i / 1000.0, u2 = 1.0 - u1;
    double e = u1 * a1 + u2 * a2;
    if (u1 > 0) e += u1 * std::log(u1) / alpha;
    if (u2 > 0) e += u2 * std::log(u2) / alpha;
    if (e < best_e) {
      best_e = e;
      best = u1;
    }
  }
  return best;
}

FeatureMap step_features(const core::BinaryMask& m) {
  FeatureMap f(m.shape(), 2);
  for (std::size_t p = 0; p < m.shape().pixels(); ++p) {
    f.at(p, 0) = m.at(p);
    f.at(p, 1) = 1.0 - m.at(p);
  }
  return f;
}

}  // namespace

TEST_CASE("rho of parallel, orthogonal and antiparallel features") {
  FeatureMap f({1, 3}, 2);
  const std::vector<double> l{0.6, 0.8};
  f.at(0, 0, 0) = 0.6, f.at(0, 0, 1) = 0.8;
  f.at(0, 1, 0) = -0.8, f.at(0, 1, 1) = 0.6;
  f.at(0, 2, 0) = -0.6, f.at(0, 2, 1) = -0.8;
  const ScalarGrid r = rho(f, l);
  CHECK(r.at(0, 0) == doctest::Approx(-1.0));
  CHECK(r.at(0, 1) == doctest::Approx(0.0));
  CHECK(r.at(0, 2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(rho(f, std::vector<double>{0.0, 0.0}), core::InvalidArgument);
}

TEST_CASE("rho matches a naive evaluation and is antisymmetric in the prototype") {
  std::mt19937_64 rng(3);
  const FeatureMap f = random_features({3, 3}, 4, rng);
  const std::vector<double> l{0.3, -1.2, 0.5, 2.0}, nl{-0.3, 1.2, -0.5, -2.0};
  const ScalarGrid r = rho(f, l), rn = rho(f, nl);
  for (std::size_t p = 0; p < 9; ++p) {
    const auto px = f.pixel(p);
    CHECK(r.at(p, 0) == doctest::Approx(naive_rho({px.begin(), px.end()}, l)).epsilon(1e-12));
    CHECK(rn.at(p, 0) == -r.at(p, 0));
  }
}

TEST_CASE("data consistency closed form") {
  FeatureMap f({1, 2}, 2);
  f.at(0, 0, 0) = 1.0;
  f.at(0, 1, 0) = 1.0, f.at(0, 1, 1) = 1.0;
  const PrototypePair l{{1.0, 0.0}, {-1.0, 0.0}};
  SolverConfig cfg;
  const SoftMask u = data_consistency(f, l, core::make_dual({1, 2}), cfg);
  CHECK(1.0 - u.at(0, 0, 0) <= 1e-12);
  CHECK(u.at(0, 1, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-20.0 * std::sqrt(2.0)))));

  const PrototypePair same{{0.0, 1.0}, {0.0, 1.0}};
  const SoftMask half = data_consistency(f, same, core::make_dual({1, 2}), cfg);
  CHECK(half.at(0, 0, 0) == 0.5);
  CHECK(half.at(0, 0, 1) == 0.5);
}

TEST_CASE("data consistency equals the grid-search minimizer") {
  std::mt19937_64 rng(11);
  SolverConfig cfg;
  cfg.alpha = 3.0;
  const FeatureMap f = random_features({4, 4}, 3, rng);
  const PrototypePair l{{1.0, 0.5, -0.2}, {-0.3, 0.7, 0.9}};
  const DualField v = random_dual({4, 4}, rng, 0.5);
  const SoftMask u = data_consistency(f, l, v, cfg);
  for (std::size_t p = 0; p < 16; ++p) {
    const auto px = f.pixel(p);
    const std::vector<double> fv(px.begin(), px.end());
    const double a1 = naive_rho(fv, l.l1) + v.at(p, 0), a2 = naive_rho(fv, l.l2) + v.at(p, 1);
    CHECK(std::abs(u.at(p, 0) - grid_argmin(a1, a2, cfg.alpha)) <= 1e-3);
  }
}

TEST_CASE("data consistency stays on the simplex across sharpness values") {
  std::mt19937_64 rng(5);
  for (double alpha : {0.1, 1.0, 20.0, 100.0}) {
    SolverConfig cfg;
    cfg.alpha = alpha;
    const FeatureMap f = random_features({5, 5}, 2, rng);
    const SoftMask u = data_consistency(f, {{1.0, 0.2}, {-0.4, 1.0}}, random_dual({5, 5}, rng, 3.0), cfg);
    CHECK(core::validate_simplex(u));
  }
}

TEST_CASE("masked average pooling") {
  FeatureMap f({1, 2}, 2);
  f.at(0, 0, 0) = 1.0;
  f.at(0, 1, 1) = 1.0;
  const auto l = map_pool(f, core::make_scalar({1, 2}, 1.0));
  CHECK(l == std::vector<double>{0.5, 0.5});
  ScalarGrid w = core::make_scalar({1, 2});
  w.at(0, 1) = 1.0;
  CHECK(map_pool(f, w, 2.0) == std::vector<double>{0.0, 2.0});
  CHECK_THROWS_WITH_AS(map_pool(f, core::make_scalar({1, 2})), doctest::Contains("empty region"),
                       core::InvalidArgument);
}

TEST_CASE("dual update") {
  std::mt19937_64 rng(17);
  const GridShape s(3, 4);
  for (int t = 0; t < 50; ++t) {
    const SoftMask u = random_soft(s, rng);
    const DualField v = random_dual(s, rng, 2.0);
    std::uniform_real_distribution<double> d(0.05, 3.0);
    const DualField out = dual_update(u, v, StageParams::with_delta(d(rng), std::make_shared<IdentityDenoiser>()));
    for (double x : out.values()) CHECK(std::abs(x) <= 1e-12);
  }

  const SoftMask u = random_soft(s, rng);
  const DualField c = dual_update(u, core::make_dual(s), StageParams::with_delta(1.0, std::make_shared<ConstantDenoiser>(0.5)));
  for (std::size_t p = 0; p < s.pixels(); ++p)
    for (int ch = 0; ch < 2; ++ch) CHECK(c.at(p, ch) == doctest::Approx(u.at(p, ch) - 0.5).epsilon(1e-12));

  const DualField z = dual_update(u, random_dual(s, rng), StageParams::with_delta(0.7, std::make_shared<TvDenoiser>(0.0, 10)));
  for (double x : z.values()) CHECK(std::abs(x) <= 1e-12);
}

TEST_CASE("energy closed forms") {
  const GridShape s(3, 4);
  FeatureMap f(s, 2);
  for (std::size_t p = 0; p < s.pixels(); ++p) f.at(p, 0) = 1.0;
  SolverConfig cfg;
  // Both prototypes orthogonal to every feature: rho = 0.
  const PrototypePair ortho{{0.0, 1.0}, {0.0, -1.0}};
  const SoftMask half = core::make_soft_mask(s);
  CHECK(lms_energy(f, half, ortho, cfg, 3.0) == doctest::Approx(-12.0 * std::log(2.0) / 20.0));

  const PrototypePair aligned{{1.0, 0.0}, {-1.0, 0.0}};
  SoftMask onehot(s, 2);
  for (std::size_t p = 0; p < s.pixels(); ++p) onehot.at(p, 0) = 1.0;
  CHECK(lms_energy(f, onehot, aligned, cfg, 0.0) == doctest::Approx(-12.0));
}

TEST_CASE("energy matches naive summation on a small instance") {
  std::mt19937_64 rng(23);
  const GridShape s(3, 3);
  const FeatureMap f = random_features(s, 2, rng);
  const SoftMask u = random_soft(s, rng);
  const PrototypePair l{{0.4, 1.0}, {1.0, -0.7}};
  SolverConfig cfg;
  cfg.alpha = 7.0;
  const double tv_weight = 0.3;
  double e = 0.0;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      const std::vector<double> fv{f.at(y, x, 0), f.at(y, x, 1)};
      for (int c = 0; c < 2; ++c) {
        const double ui = u.at(y, x, c);
        e += ui * naive_rho(fv, c == 0 ? l.l1 : l.l2) + ui * std::log(ui) / cfg.alpha;
        if (x < 2) e += tv_weight * std::abs(u.at(y, x + 1, c) - ui);
        if (y < 2) e += tv_weight * std::abs(u.at(y + 1, x, c) - ui);
      }
    }
  CHECK(lms_energy(f, u, l, cfg, tv_weight) == doctest::Approx(e).epsilon(1e-12));
}

TEST_CASE("tv prox basics") {
  const ScalarGrid flat = core::make_scalar({4, 5}, 0.3);
  const ScalarGrid out = tv_prox(flat, 0.7, 50);
  for (std::size_t p = 0; p < 20; ++p) CHECK(out.at(p, 0) == doctest::Approx(0.3).epsilon(1e-12));

  std::mt19937_64 rng(29);
  ScalarGrid z = core::make_scalar({6, 6});
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (double& x : z.values()) x = d(rng);
  CHECK(tv_prox(z, 0.0, 5).data() == z.data());
  CHECK(total_variation(tv_prox(z, 0.2, 200)) <= total_variation(z));
}

TEST_CASE("tv prox reproduces the exact 1D step solution") {
  // For a jump of height 1 between two runs of n samples, the ROF solution
  // moves each run toward the other by weight / n.
  const int n = 8;
  const double weight = 0.1;
  ScalarGrid z = core::make_scalar({1, 2 * n});
  for (int x = n; x < 2 * n; ++x) z.at(0, x) = 1.0;
  const ScalarGrid out = tv_prox(z, weight, 2000);
  for (int x = 0; x < 2 * n; ++x) {
    const double expected = x < n ? weight / n : 1.0 - weight / n;
    CHECK(std::abs(out.at(0, x) - expected) <= 1e-3);
  }
}

TEST_CASE("warm started tv prox converges to the cold solution") {
  std::mt19937_64 rng(31);
  ScalarGrid z = core::make_scalar({8, 8});
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (double& x : z.values()) x = d(rng);
  const ScalarGrid cold = tv_prox(z, 0.4, 3000);
  TvDualState state;
  ScalarGrid warm;
  for (int i = 0; i < 30; ++i) warm = tv_prox(z, 0.4, 100, state);
  for (std::size_t p = 0; p < 64; ++p) CHECK(warm.at(p, 0) == doctest::Approx(cold.at(p, 0)).epsilon(1e-6));
  TvDualState fresh;
  CHECK(tv_prox(z, 0.4, 37, fresh).data() == tv_prox(z, 0.4, 37).data());
}

TEST_CASE("Potts solver without a prior is a single data consistency step") {
  std::mt19937_64 rng(37);
  const FeatureMap f = random_features({6, 6}, 2, rng);
  const PrototypePair l{{1.0, 0.0}, {0.0, 1.0}};
  SolverConfig cfg;
  const SoftMask dc = data_consistency(f, l, core::make_dual({6, 6}), cfg);
  const PottsResult r = reference_potts_solve(f, l, cfg, 0.0);
  CHECK(r.iterations == 2);
  CHECK(r.u.data() == dc.data());
  CHECK(r.energy_trace[0] == r.energy_trace[1]);
}

TEST_CASE("Potts solver recovers a noiseless two-region image") {
  core::BinaryMask m({32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const bool a = (y - 10) * (y - 10) + (x - 10) * (x - 10) < 36;
      const bool b = (y - 20) * (y - 20) + (x - 21) * (x - 21) < 49;
      m.set(y, x, a || b);
    }
  const PottsResult r = reference_potts_solve(step_features(m), {{1.0, 0.0}, {0.0, 1.0}}, {}, 0.5);
  CHECK(core::dice(core::binarize(r.u), m) == 1.0);
  for (std::size_t k = 2; k < r.energy_trace.size(); ++k)
    CHECK(r.energy_trace[k] <= r.energy_trace[k - 1] + 1e-6);
}
