#include <doctest.h>

#include <random>
#include <set>

#include "lms/proto/prototypes.hpp"

using namespace lms;
using namespace lms::proto;

namespace {

FeatureMap random_features(GridShape s, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  FeatureMap f(s, c);
  for (double& x : f.values()) x = d(rng);
  return f;
}

BinaryMask random_mask(GridShape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BinaryMask m(s);
  for (std::size_t p = 0; p < s.pixels(); ++p) m.set(p, rng() % 3 != 0);
  return m;
}

}  // namespace

TEST_CASE("support prototypes of a constant foreground") {
  FeatureMap f({3, 3}, 2);
  BinaryMask m({3, 3});
  for (std::size_t p = 0; p < 9; ++p) {
    f.at(p, 0) = p < 4 ? 0.25 : 9.0;
    f.at(p, 1) = p < 4 ? -1.5 : 9.0;
    m.set(p, p < 4);
  }
  const PrototypePair l = support_prototypes(f, m);
  CHECK(l.l1 == std::vector<double>{0.25, -1.5});
  CHECK(l.l2 == std::vector<double>{-0.25, 1.5});
}

TEST_CASE("support prototype equals a naive masked mean") {
  FeatureMap f({4, 4}, 3);
  BinaryMask m({4, 4});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const bool dark = (x + y) % 2 == 0;
      for (int c = 0; c < 3; ++c) f.at(y, x, c) = dark ? 1.0 + c : -0.5 * c + 0.1 * x;
      m.set(y, x, y < 2);
    }
  std::vector<double> mean(3, 0.0);
  int count = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      if (m.at(y, x)) {
        ++count;
        for (int c = 0; c < 3; ++c) mean[c] += f.at(y, x, c);
      }
  const PrototypePair l = support_prototypes(f, m);
  for (int c = 0; c < 3; ++c) {
    CHECK(l.l1[c] == doctest::Approx(mean[c] / count).epsilon(1e-14));
    CHECK(l.l2[c] == -l.l1[c]);
  }
}

TEST_CASE("init mask") {
  FeatureMap f({1, 2}, 2);
  f.at(0, 0, 0) = 2.0;
  f.at(0, 1, 1) = 1.0;
  const PrototypePair l{{1.0, 0.0}, {-1.0, 0.0}};
  const SoftMask u = init_mask(f, l, {});
  CHECK(u.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(u.at(0, 1, 0) == 0.5);
  CHECK(u.at(0, 1, 1) == 0.5);

  const FeatureMap r = random_features({5, 5}, 4, 2);
  const PrototypePair lr{{0.5, -1.0, 0.2, 0.3}, {-0.5, 1.0, -0.2, -0.3}};
  CHECK(init_mask(r, lr, {}).data() == solver::data_consistency(r, lr, core::make_dual({5, 5}), {}).data());
}

TEST_CASE("voronoi partition with one region") {
  const BinaryMask m = random_mask({6, 7}, 4);
  const LabelGrid labels = voronoi_partition(m, 1, 9);
  for (std::size_t p = 0; p < m.shape().pixels(); ++p) CHECK(labels.at(p) == (m.at(p) ? 0 : -1));
}

TEST_CASE("voronoi partition splits two distant squares") {
  BinaryMask m({8, 20});
  for (int y = 2; y < 6; ++y)
    for (int x = 0; x < 4; ++x) {
      m.set(y, x + 1, true);
      m.set(y, x + 15, true);
    }
  const LabelGrid labels = voronoi_partition(m, 2, 1);
  const int left = labels.at(2, 1), right = labels.at(2, 15);
  CHECK(left != right);
  for (int y = 2; y < 6; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(labels.at(y, x + 1) == left);
      CHECK(labels.at(y, x + 15) == right);
    }
}

TEST_CASE("voronoi labels partition the foreground") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const BinaryMask m = random_mask({9, 9}, seed);
    const int n = 6;
    const LabelGrid labels = voronoi_partition(m, n, seed);
    std::set<int> used;
    for (std::size_t p = 0; p < m.shape().pixels(); ++p) {
      CHECK((labels.at(p) >= 0) == (m.at(p) != 0));
      if (labels.at(p) >= 0) used.insert(labels.at(p));
    }
    CHECK(used.size() == static_cast<std::size_t>(n));
    CHECK(*used.rbegin() == n - 1);
    CHECK(labels == voronoi_partition(m, n, seed));
  }
  CHECK_THROWS_AS(voronoi_partition(BinaryMask({2, 2}), 1, 0), core::InvalidArgument);
}

TEST_CASE("representative prototypes") {
  FeatureMap f({2, 2}, 2);
  LabelGrid labels({2, 2}, -1);
  for (std::size_t p = 0; p < 4; ++p) {
    f.at(p, 0) = p < 2 ? 1.0 : 3.0;
    f.at(p, 1) = p < 2 ? -2.0 : 0.5;
  }
  labels.at(0) = 0, labels.at(1) = 0, labels.at(2) = 1;
  const ProtoBank bank = representative_prototypes(f, labels);
  REQUIRE(bank.count() == 2);
  CHECK(bank.row(0)[0] == 1.0);
  CHECK(bank.row(0)[1] == -2.0);
  CHECK(bank.row(1)[0] == 3.0);
  CHECK(bank.row(1)[1] == 0.5);
}

TEST_CASE("size-weighted bank mean equals the foreground prototype") {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const FeatureMap f = random_features({8, 8}, 3, seed);
    const BinaryMask m = random_mask({8, 8}, seed + 100);
    const LabelGrid labels = voronoi_partition(m, 5, seed);
    const ProtoBank bank = representative_prototypes(f, labels);
    const auto sizes = region_sizes(f, labels);
    const PrototypePair l = support_prototypes(f, m);
    double total = 0;
    for (auto s : sizes) total += static_cast<double>(s);
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int n = 0; n < bank.count(); ++n) acc += static_cast<double>(sizes[n]) * bank.row(n)[c];
      CHECK(acc / total == doctest::Approx(l.l1[c]).epsilon(1e-12));
    }
  }
}
