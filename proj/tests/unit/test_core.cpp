#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "lms/core/grid.hpp"
#include "lms/core/metrics.hpp"
#include "lms/core/tensor_io.hpp"

using namespace lms::core;

namespace {

SoftMask constant_mask(double u1, double u2, GridShape s = {2, 3}) {
  SoftMask u(s, 2);
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    u.at(p, 0) = u1;
    u.at(p, 1) = u2;
  }
  return u;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "lms_test_core";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("simplex validation") {
  CHECK(validate_simplex(constant_mask(0.5, 0.5)));
  CHECK(validate_simplex(constant_mask(1.0, 0.0)));
  SoftMask u = constant_mask(0.5, 0.5);
  u.at(1, 0, 0) = 0.6;
  u.at(1, 0, 1) = 0.6;
  CHECK_FALSE(validate_simplex(u));
  CHECK_FALSE(validate_simplex(constant_mask(1.1, -0.1)));
}

TEST_CASE("entropy map") {
  CHECK(entropy_map(constant_mask(0.5, 0.5)).at(0, 0) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(entropy_map(constant_mask(1.0, 0.0)).at(0, 0) == 0.0);
  CHECK(entropy_map(constant_mask(0.9, 0.1)).at(0, 0) == doctest::Approx(0.325083).epsilon(1e-6));
}

TEST_CASE("binarize with tie to background") {
  CHECK(binarize(constant_mask(0.7, 0.3)).at(0) == 1);
  CHECK(binarize(constant_mask(0.5, 0.5)).at(0) == 0);
  CHECK(binarize(constant_mask(0.2, 0.8)).at(0) == 0);
}

TEST_CASE("dice") {
  BinaryMask a({2, 2}), b({2, 2});
  a.set(0, 0, true);
  a.set(0, 1, true);
  CHECK(dice(a, a) == 1.0);
  b.set(1, 0, true);
  b.set(1, 1, true);
  CHECK(dice(a, b) == 0.0);
  b.set(1, 1, false);
  b.set(0, 1, true);
  CHECK(dice(a, b) == 0.5);
  CHECK(dice(BinaryMask({2, 2}), BinaryMask({2, 2})) == 1.0);
}

TEST_CASE("mask downsampling keeps cells with half coverage") {
  BinaryMask m({4, 4});
  m.set(0, 0, true);
  m.set(0, 1, true);
  m.set(2, 2, true);
  const BinaryMask d = downsample_mask(m, {2, 2});
  CHECK(d.at(0, 0) == 1);
  CHECK(d.at(1, 1) == 0);
  CHECK(d.count() == 1);
  CHECK_THROWS_AS(downsample_mask(m, {3, 3}), InvalidArgument);
}

TEST_CASE("LMT1 round trip and byte layout") {
  const std::vector<std::uint32_t> dims{2, 1};
  const std::vector<double> data{1.5, -2.0};
  const auto bytes = encode_lmt1(dims, data);
  REQUIRE(bytes.size() == 4 + 4 + 8 + 16);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LMT1");
  CHECK(bytes[4] == 2);
  CHECK(bytes[8] == 2);
  CHECK(bytes[12] == 1);
  const RawTensor t = decode_lmt1(bytes);
  CHECK(t.dims == dims);
  CHECK(t.data == data);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_lmt1(truncated), IoError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_lmt1(bad_magic), IoError);
}

TEST_CASE("field and mask files round trip") {
  SoftMask u = constant_mask(0.25, 0.75, {3, 2});
  u.at(2, 0, 0) = 0.125;
  write_field(scratch("u.lmt"), u);
  const SoftMask back = read_field<SoftMaskTag>(scratch("u.lmt"));
  CHECK(back.shape() == u.shape());
  CHECK(back.data() == u.data());

  BinaryMask m({3, 3});
  m.set(1, 2, true);
  write_mask(scratch("m.lmt"), m);
  CHECK(read_mask(scratch("m.lmt")) == m);
}

TEST_CASE("PGM encoding") {
  ScalarGrid g = make_scalar({1, 3});
  g.at(0, 0) = -1.0;
  g.at(0, 1) = 0.5;
  g.at(0, 2) = 2.0;
  write_pgm(scratch("g.pgm"), g);
  GridShape s;
  const auto px = read_pgm_pixels(scratch("g.pgm"), &s);
  CHECK(s == GridShape(1, 3));
  CHECK(px == std::vector<std::uint8_t>{0, 128, 255});

  const ScalarGrid n = minmax_normalize(g);
  CHECK(n.at(0, 0) == 0.0);
  CHECK(n.at(0, 2) == 1.0);
  CHECK(minmax_normalize(make_scalar({2, 2}, 3.0)).at(0, 0) == 0.0);
}

TEST_CASE("bilinear upsampling uses half-pixel centres and clamped edges") {
  ScalarGrid g(GridShape(1, 2), 1);
  g.at(0, 0, 0) = 0.0;
  g.at(0, 1, 0) = 1.0;
  const ScalarGrid up = upsample_bilinear(g, 2);
  REQUIRE(up.shape() == GridShape(2, 4));
  const double expect[] = {0.0, 0.25, 0.75, 1.0};
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) CHECK(up.at(y, x, 0) == doctest::Approx(expect[x]).epsilon(1e-15));
  const ScalarGrid same = upsample_bilinear(g, 1);
  CHECK(std::ranges::equal(same.values(), g.values()));
  CHECK_THROWS_AS(upsample_bilinear(g, 0), InvalidArgument);
}

TEST_CASE("bilinear upsampling of a simplex field stays on the simplex") {
  SoftMask u(GridShape(3, 3), 2);
  for (std::size_t p = 0; p < 9; ++p) {
    u.at(p, 0) = 0.1 * static_cast<double>(p);
    u.at(p, 1) = 1.0 - u.at(p, 0);
  }
  const SoftMask up = upsample_bilinear(u, 4);
  for (std::size_t p = 0; p < up.shape().pixels(); ++p)
    CHECK(up.at(p, 0) + up.at(p, 1) == doctest::Approx(1.0).epsilon(1e-14));
}
