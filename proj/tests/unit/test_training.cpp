#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lms/core/metrics.hpp"
#include "lms/training/grad_check.hpp"
#include "lms/training/losses.hpp"
#include "lms/training/sgd.hpp"

using namespace lms;
using namespace lms::training;
using core::BinaryMask;
using core::GridShape;

namespace {

// A bright disc on a dark noisy background.
Episode disc_episode(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-0.1, 0.1);
  std::uniform_int_distribution<int> jitter(-2, 2);
  auto draw = [&](core::ScalarGrid& img, BinaryMask& mask) {
    const double cy = size / 2.0 + jitter(rng), cx = size / 2.0 + jitter(rng), r = size / 4.0;
    img = core::make_scalar({size, size});
    mask = BinaryMask({size, size});
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const bool in = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r;
        mask.set(y, x, in);
        img.at(y, x) = (in ? 0.8 : 0.2) + noise(rng);
      }
  };
  Episode ep;
  BinaryMask q;
  draw(ep.support_image, ep.support_mask);
  draw(ep.query_image, q);
  ep.query_gt = q;
  ep.class_id = 0;
  return ep;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.backbone = {4, 8, 8};
  cfg.md_hidden = 4;
  cfg.mut = {2, 2};
  cfg.n_p = 4;
  cfg.seed = 3;
  return cfg;
}

core::SoftMask onehot(const BinaryMask& m, bool match) {
  core::SoftMask u(m.shape(), 2);
  for (std::size_t p = 0; p < m.shape().pixels(); ++p) {
    const bool fg = (m.at(p) != 0) == match;
    u.at(p, 0) = fg ? 1.0 : 0.0;
    u.at(p, 1) = fg ? 0.0 : 1.0;
  }
  return u;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  TrainConfig cfg;
  CHECK(cfg.lr_at(0) == doctest::Approx(1e-3).epsilon(1e-14));
  CHECK(cfg.lr_at(999) == doctest::Approx(1e-3).epsilon(1e-14));
  CHECK(cfg.lr_at(1000) == doctest::Approx(9.8e-4).epsilon(1e-14));
  CHECK(cfg.lr_at(2500) == doctest::Approx(9.604e-4).epsilon(1e-14));
}

TEST_CASE("cross entropy reference values") {
  BinaryMask gt({4, 4});
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 4; ++x) gt.set(y, x, true);
  CHECK(ce_loss(onehot(gt, true), gt) == doctest::Approx(-std::log(1.0 - 1e-6)).epsilon(1e-9));
  CHECK(ce_loss(core::make_soft_mask({4, 4}), gt) == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(ce_loss(onehot(gt, false), gt) == doctest::Approx(13.8155).epsilon(1e-5));
  // A finer ground truth is reduced to the prediction grid first.
  BinaryMask fine({8, 8});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 8; ++x) fine.set(y, x, true);
  CHECK(ce_loss(onehot(gt, true), fine) == ce_loss(onehot(gt, true), gt));
}

TEST_CASE("prototype alignment loss") {
  Tape tape;
  ModelConfig cfg = tiny_model();
  const Episode ep = disc_episode(16, 1);
  const BinaryMask fg = core::downsample_mask(ep.support_mask, {4, 4});
  Tensor feats({4, 4, 2});
  for (std::size_t p = 0; p < 16; ++p) feats.data[2 * p + (fg.at(p) ? 0 : 1)] = 1.0;
  Episode same = ep;
  same.query_image = ep.support_image;
  same.query_gt = ep.support_mask;

  ForwardVars fwd;
  fwd.support_features = tape.constant(feats);
  fwd.query_features = tape.constant(feats);
  fwd.u_final = tape.constant(nn::to_tensor(onehot(fg, true)));
  CHECK(par_loss(fwd, same, cfg).value().item() <= 1.1e-6);

  core::SoftMask all_bg(fg.shape(), 2);
  for (std::size_t p = 0; p < 16; ++p) all_bg.at(p, 1) = 1.0;
  fwd.u_final = tape.constant(nn::to_tensor(all_bg));
  CHECK(par_loss(fwd, same, cfg).value().item() == 0.0);
}

TEST_CASE("zero-initialized denoisers leave the initial mask unchanged") {
  const Episode ep = disc_episode(16, 2);
  for (int stages : {1, 2, 3}) {
    ModelConfig cfg = tiny_model();
    cfg.flms_mode = true;
    cfg.stages = stages;
    const ParamStore params = init_params(cfg);
    const ForwardResult r = lms_forward(ep, params, cfg);
    const auto fs = nn::feature_extract(ep.support_image, params);
    const auto fq = nn::feature_extract(ep.query_image, params);
    const auto u0 = proto::init_mask(fq, proto::support_prototypes(fs, ep.support_mask), cfg.solver());
    CHECK(r.u_final.data() == u0.data());
    CHECK(r.u_init.data() == u0.data());
    REQUIRE(r.stages.size() == static_cast<std::size_t>(stages));
    for (const auto& st : r.stages)
      for (double v : st.v.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("forward trace shapes") {
  ModelConfig cfg = tiny_model();
  const ParamStore params = init_params(cfg);
  const ForwardResult r = lms_forward(disc_episode(16, 3), params, cfg);
  REQUIRE(r.stages.size() == 2);
  for (const auto& st : r.stages) {
    CHECK(st.u.shape() == GridShape(4, 4));
    CHECK(st.v.shape() == GridShape(4, 4));
    CHECK(st.l.l1.size() == 8);
    for (int c = 0; c < 8; ++c) CHECK(st.l.l2[c] == -st.l.l1[c]);
    CHECK(core::validate_simplex(st.u));
  }
  CHECK(predict_mask(r, {16, 16}).shape() == GridShape(16, 16));
}

TEST_CASE("total loss") {
  ModelConfig cfg = tiny_model();
  const ParamStore params = init_params(cfg);
  Tape tape;
  ParamBinding bound(tape, params, true);
  const LossVars loss = total_loss(bound, disc_episode(16, 4), cfg);
  const double total = loss.total.value().item();
  CHECK(std::isfinite(total));
  CHECK(total > 0.0);
  CHECK(total == doctest::Approx(loss.ce.value().item() + loss.par.value().item()).epsilon(1e-15));
  Episode no_gt = disc_episode(16, 4);
  no_gt.query_gt.reset();
  CHECK_THROWS_AS(total_loss(bound, no_gt, cfg), core::InvalidArgument);
}

TEST_CASE("SGD lowers the loss and is reproducible") {
  ModelConfig cfg = tiny_model();
  TrainConfig tc;
  tc.total_iterations = 100;
  tc.learning_rate = 1e-3;
  tc.seed = 5;
  const EpisodeSampler sample = [](std::mt19937_64& rng) { return disc_episode(16, rng()); };
  const TrainResult a = sgd_train(sample, init_params(cfg), cfg, tc);
  const TrainResult b = sgd_train(sample, init_params(cfg), cfg, tc);
  REQUIRE(a.log.size() == 100);
  double first = 0, last = 0;
  for (int i = 0; i < 20; ++i) {
    first += a.log[i].total;
    last += a.log[80 + i].total;
  }
  CHECK(last < first);
  CHECK(a.params == b.params);

  const auto dir = std::filesystem::temp_directory_path() / "lms_test_training";
  std::filesystem::create_directories(dir);
  write_loss_log(dir / "a.csv", a.log);
  write_loss_log(dir / "b.csv", b.log);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  const std::string text = slurp(dir / "a.csv");
  CHECK(text == slurp(dir / "b.csv"));
  CHECK(text.rfind("step,lr,ce,par,total\n0,0.001,", 0) == 0);
}

TEST_CASE("gradient checks") {
  for (const std::string& op : grad_check_ops()) {
    CAPTURE(op);
    const GradCheckReport r = grad_check(op, 2, 11);
    CHECK(r.entries_checked > 0);
    CHECK(r.max_rel_error <= 1e-4);
  }
  CHECK_THROWS_AS(grad_check("no_such_op", 1, 0), core::InvalidArgument);
}

TEST_CASE("gradient check detects a perturbed gradient") {
  GradCheckOptions opts;
  opts.analytic_perturbation = 1e-2;
  for (const char* op : {"md_forward", "data_consistency", "mut_forward"})
    CHECK(grad_check(op, 1, 13, opts).max_rel_error > 1e-4);
}

TEST_CASE("relative error") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(1.0, 1.1) == doctest::Approx(0.1 / 1.1));
}
