#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>

#include "lms/neural/networks.hpp"
#include "lms/neural/ops.hpp"

using namespace lms;
using namespace lms::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (double& x : t.data) x = d(rng);
  return t;
}

// Central differences of a scalar function of one tensor, entry by entry.
Tensor numeric_gradient(const std::function<double(const Tensor&)>& f, Tensor x, double h = 1e-6) {
  Tensor g(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double up = f(x);
    x.data[i] = keep - h;
    const double down = f(x);
    x.data[i] = keep;
    g.data[i] = (up - down) / (2 * h);
  }
  return g;
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.shape == b.shape);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::abs(a.data[i] - b.data[i]) <= tol * std::max(1.0, std::abs(b.data[i])));
}

}  // namespace

TEST_CASE("half squared norm has gradient w") {
  Tape tape;
  const Tensor w0 = random_tensor({3, 4}, 1);
  const Var w = tape.leaf(w0);
  const Var unused = tape.leaf(random_tensor({2}, 2));
  const Var loss = ops::scale(ops::sum(ops::mul(w, w)), 0.5);
  tape.backward(loss);
  CHECK(tape.grad(w).data == w0.data);
  for (double g : tape.grad(unused).data) CHECK(g == 0.0);
}

TEST_CASE("non-finite values are rejected when recorded") {
  Tape tape;
  const Var x = tape.leaf(Tensor({2}, std::vector<double>{1.0, -1.0}));
  CHECK_THROWS_AS(ops::div_scalar(x, tape.leaf(Tensor::scalar(0.0))), core::NumericError);
}

TEST_CASE("conv3x3 matches a naive replicate-padded convolution") {
  const Tensor x = random_tensor({5, 6, 2}, 3), w = random_tensor({3, 3, 3, 2}, 4), b = random_tensor({3}, 5);
  Tape tape;
  const Tensor y = ops::conv3x3(tape.constant(x), tape.constant(w), tape.constant(b), 2).value();
  REQUIRE(y.shape == std::vector<int>{3, 3, 3});
  for (int oy = 0; oy < 3; ++oy)
    for (int ox = 0; ox < 3; ++ox)
      for (int o = 0; o < 3; ++o) {
        double acc = b.data[o];
        for (int ky = -1; ky <= 1; ++ky)
          for (int kx = -1; kx <= 1; ++kx) {
            const int sy = std::clamp(2 * oy + ky, 0, 4), sx = std::clamp(2 * ox + kx, 0, 5);
            for (int c = 0; c < 2; ++c)
              acc += w.data[((o * 3 + ky + 1) * 3 + kx + 1) * 2 + c] * x.data[(sy * 6 + sx) * 2 + c];
          }
        CHECK(y.data[(oy * 3 + ox) * 3 + o] == doctest::Approx(acc).epsilon(1e-13));
      }
}

TEST_CASE("op gradients match central differences") {
  const Tensor x0 = random_tensor({4, 4, 2}, 6), w0 = random_tensor({2, 3, 3, 2}, 7), b0 = random_tensor({2}, 8);
  const Tensor probe = random_tensor({2, 2, 2}, 9);
  auto conv_loss = [&](const Tensor& x, const Tensor& w, Tape& tape, Var* wv) {
    const Var wl = tape.leaf(w);
    if (wv) *wv = wl;
    const Var y = ops::conv3x3(tape.leaf(x), wl, tape.leaf(b0), 2);
    return ops::sum(ops::mul(ops::gelu(y), tape.constant(probe)));
  };
  Tape tape;
  Var wv;
  tape.backward(conv_loss(x0, w0, tape, &wv));
  const Tensor numeric = numeric_gradient(
      [&](const Tensor& w) {
        Tape t;
        return conv_loss(x0, w, t, nullptr).value().item();
      },
      w0);
  check_close(tape.grad(wv), numeric, 1e-6);

  const Tensor rows = random_tensor({3, 4}, 10), gamma = random_tensor({4}, 11), beta = random_tensor({4}, 12);
  const Tensor ln_probe = random_tensor({3, 4}, 13);
  auto ln_loss = [&](const Tensor& r, Tape& t, Var* rv) {
    const Var rl = t.leaf(r);
    if (rv) *rv = rl;
    return ops::sum(ops::mul(ops::layer_norm_rows(rl, t.leaf(gamma), t.leaf(beta)), t.constant(ln_probe)));
  };
  Tape t2;
  Var rv;
  t2.backward(ln_loss(rows, t2, &rv));
  check_close(t2.grad(rv),
              numeric_gradient(
                  [&](const Tensor& r) {
                    Tape t;
                    return ln_loss(r, t, nullptr).value().item();
                  },
                  rows),
              1e-6);
}

TEST_CASE("feature extractor shapes and weight sharing") {
  ParamStore store;
  std::mt19937_64 rng(3);
  BackboneConfig cfg{4, 6, 8};
  add_backbone_params(store, cfg, rng);
  const ScalarGrid img = to_scalar_grid(random_tensor({16, 12}, 14, 0.0, 1.0));
  const FeatureMap f = feature_extract(img, store);
  CHECK(f.height() == 4);
  CHECK(f.width() == 3);
  CHECK(f.channels() == 8);
  CHECK(feature_extract(img, store).data() == f.data());
}

TEST_CASE("mask denoiser") {
  ParamStore store;
  std::mt19937_64 rng(5);
  add_md_params(store, "md", 6, rng);
  const ScalarGrid u = to_scalar_grid(random_tensor({7, 5}, 15, 0.0, 1.0));
  ScalarGrid edge = u;
  edge.at(0, 0) = 0.0;
  edge.at(0, 1) = 1.0;
  edge.at(0, 2) = 1e-9;
  // A zero last layer makes variant (c) the identity, saturated pixels included.
  CHECK(md_forward(edge, store, "md", MdVariant::kSigmoidLogit).data() == edge.data());
  const ScalarGrid plain = md_forward(u, store, "md", MdVariant::kPlain);
  for (double x : plain.data()) CHECK(x == 0.0);

  store.get_mut("md.conv5.w") = random_tensor({1, 3, 3, 6}, 16, -2.0, 2.0);
  store.get_mut("md.conv5.b") = Tensor({1}, 0.7);
  for (MdVariant v : {MdVariant::kSigmoid, MdVariant::kSigmoidLogit}) {
    const ScalarGrid out = md_forward(u, store, "md", v);
    for (double x : out.data()) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
  }
  CHECK(parse_md_variant("a") == MdVariant::kPlain);
  CHECK(parse_md_variant("sigmoid") == MdVariant::kSigmoid);
  CHECK(to_string(MdVariant::kSigmoidLogit) == "c");
  CHECK_THROWS_AS(parse_md_variant("d"), core::InvalidArgument);
}

TEST_CASE("masking matrix") {
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> l1{1.0, 0.0};
  const auto m = masking_matrix(std::vector<double>{1.0, 3.0, 0.5, -2.0, 0.0, 1.0}, 3, l1);
  CHECK(m == std::vector<double>{0.0, 0.0, -inf});
  CHECK(masking_matrix(std::vector<double>{0.5, 0.0, 0.5, 1.0}, 2, l1) == std::vector<double>{-inf, -inf});
  CHECK(masking_matrix(std::vector<double>{2.0, 0.0}, 1, l1) == std::vector<double>{-inf});
}

TEST_CASE("masked attention leaves dropped rows untouched") {
  Tape tape;
  const Var p = tape.constant(random_tensor({4, 6}, 17));
  const Var l = tape.constant(random_tensor({6}, 18));
  const Tensor a = ops::single_key_attention(p, l, {true, false, true, false}).value();
  for (int c = 0; c < 6; ++c) {
    CHECK(a.data[1 * 6 + c] == 0.0);
    CHECK(a.data[3 * 6 + c] == 0.0);
  }
  CHECK(a.data[0] != 0.0);
}

TEST_CASE("MUT output shapes") {
  ParamStore store;
  std::mt19937_64 rng(7);
  MutConfig cfg{2, 2};
  add_mut_params(store, "mut", 6, cfg, rng);
  CHECK_FALSE(store.contains("mut.attn.bk"));
  const Tensor bank = random_tensor({5, 6}, 19);
  const proto::ProtoBank p(5, 6, bank.data);
  const auto l1 = random_tensor({6}, 20).data;
  const auto [out, pair] = mut_forward(p, l1, store, "mut", cfg);
  CHECK(out.count() == 5);
  CHECK(out.channels() == 6);
  REQUIRE(pair.l1.size() == 6);
  for (int c = 0; c < 6; ++c) CHECK(pair.l2[c] == -pair.l1[c]);
}

TEST_CASE("parameter store round trip") {
  ParamStore store;
  std::mt19937_64 rng(9);
  add_md_params(store, "stage1.md", 3, rng);
  store.add("stage1.delta_raw", Tensor::scalar(0.25), "step");
  CHECK_THROWS_AS(store.add("stage1.delta_raw", Tensor::scalar(1.0), "step"), core::InvalidArgument);
  const auto dir = std::filesystem::temp_directory_path() / "lms_test_params";
  std::filesystem::remove_all(dir);
  store.save(dir);
  const ParamStore back = ParamStore::load(dir);
  CHECK(back == store);
  CHECK(back.role("stage1.delta_raw") == "step");
}

TEST_CASE("bilinear upsample op agrees with the grid kernel and its adjoint") {
  const Tensor x0 = random_tensor({3, 4, 2}, 21);
  core::SoftMask g(core::GridShape(3, 4), 2);
  for (std::size_t i = 0; i < x0.size(); ++i) g.values()[i] = x0.data[i];
  const core::SoftMask ref = core::upsample_bilinear(g, 4);
  Tape tape;
  const Var xv = tape.leaf(x0);
  const Var y = ops::upsample_bilinear(xv, 4);
  REQUIRE(y.value().size() == ref.values().size());
  for (std::size_t i = 0; i < ref.values().size(); ++i) CHECK(y.value().data[i] == ref.values()[i]);

  const Tensor probe = random_tensor({12, 16, 2}, 22);
  tape.backward(ops::sum(ops::mul(y, tape.constant(probe))));
  const Tensor numeric = numeric_gradient(
      [&](const Tensor& x) {
        Tape t;
        return ops::sum(ops::mul(ops::upsample_bilinear(t.leaf(x), 4), t.constant(probe))).value().item();
      },
      x0);
  check_close(tape.grad(xv), numeric, 1e-6);
}
