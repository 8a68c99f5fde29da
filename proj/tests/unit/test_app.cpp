#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>


#include "lms/app/config.hpp"
#include "lms/app/evaluate.hpp"
#include "lms/app/segment_dump.hpp"
#include "lms/app/selfcheck.hpp"
#include "lms/core/metrics.hpp"
#include "lms/core/tensor_io.hpp"

using namespace lms;
using namespace lms::app;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lms_test_app" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticCorpusConfig small_corpus() {
  SyntheticCorpusConfig cfg;
  cfg.instances_per_class = 4;
  cfg.seed = 21;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

training::ModelConfig small_model() {
  training::ModelConfig cfg;
  cfg.backbone = {4, 8, 8};
  cfg.md_hidden = 4;
  cfg.mut = {2, 2};
  cfg.n_p = 4;
  return cfg;
}

}  // namespace

TEST_CASE("generated masks are nonempty and keep a two pixel margin") {
  const Corpus corpus = generate_corpus(small_corpus());
  REQUIRE(corpus.class_count() == kFamilyCount);
  for (const auto& cls : corpus.instances)
    for (const Instance& inst : cls) {
      CHECK_FALSE(inst.mask.empty());
      const auto& s = inst.mask.shape();
      for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x)
          if (inst.mask.at(y, x)) {
            CHECK(y >= 2);
            CHECK(x >= 2);
            CHECK(y < s.height - 2);
            CHECK(x < s.width - 2);
          }
      for (double v : inst.image.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
}

TEST_CASE("corpus generation is byte-for-byte reproducible") {
  const fs::path a = scratch("corpus_a"), b = scratch("corpus_b");
  write_corpus(generate_corpus(small_corpus()), a);
  write_corpus(generate_corpus(small_corpus()), b);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
  }
  CHECK(files == 1 + 2 * kFamilyCount * 4);
  const Corpus back = read_corpus(a);
  const Corpus fresh = generate_corpus(small_corpus());
  CHECK(back.instances[3][2].image.data() == fresh.instances[3][2].image.data());
  CHECK(back.instances[3][2].mask == fresh.instances[3][2].mask);
}

TEST_CASE("separable images are segmented exactly by the Potts solver") {
  const SyntheticCorpusConfig cfg = separable_config(0.0, 4);
  for (int i = 0; i < 3; ++i) {
    const Instance inst = make_instance(cfg, kSeparableClass, i);
    for (std::size_t p = 0; p < inst.mask.shape().pixels(); ++p)
      CHECK(inst.image.at(p, 0) == (inst.mask.at(p) ? 1.0 : 0.0));
    const auto f = solver::intensity_features(inst.image);
    const auto r = solver::reference_potts_solve(f, {{1.0, 0.0}, {0.0, 1.0}}, {}, 0.5);
    CHECK(core::dice(core::binarize(r.u), inst.mask) == 1.0);
  }
}

TEST_CASE("episode sampling respects the split") {
  const Corpus corpus = generate_corpus(small_corpus());
  SplitSpec split;
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10000; ++i) {
    const Episode ep = sample_episode(corpus, split, Phase::kTrain, rng);
    CHECK(ep.class_id < 4);
    CHECK(ep.support_image.data() != ep.query_image.data());
  }
  std::mt19937_64 r1(9), r2(9);
  for (int i = 0; i < 20; ++i) {
    const Episode a = sample_episode(corpus, split, Phase::kTest, r1);
    const Episode b = sample_episode(corpus, split, Phase::kTest, r2);
    CHECK(a.class_id >= 4);
    CHECK(a.query_image.data() == b.query_image.data());
  }
  const auto eps = test_episodes(corpus, split, 3, 5);
  REQUIRE(eps.size() == 6);
  CHECK(eps[0].class_id == 4);
  CHECK(eps[5].class_id == 5);

  SplitSpec overlap;
  overlap.test_classes = {3, 4};
  CHECK_THROWS_AS(overlap.validate(kFamilyCount), core::InvalidArgument);
  CHECK_THROWS_AS(make_episode(corpus, 0, 1, 1), core::InvalidArgument);
}

TEST_CASE("configuration parsing") {
  const auto j = nlohmann::json::parse(R"({"model": {"stages": 1, "md_variant": "b"}, "train": {"total_iterations": 7}})");
  const AppConfig cfg = parse_config(j);
  CHECK(cfg.model.stages == 1);
  CHECK(cfg.model.md_variant == nn::MdVariant::kSigmoid);
  CHECK(cfg.train.total_iterations == 7);
  CHECK(parse_config(to_json(cfg)).train.total_iterations == 7);
  CHECK_THROWS(parse_config(nlohmann::json::parse(R"({"model": {"stagez": 1}})")));
  CHECK_THROWS(parse_config(nlohmann::json::parse(R"({"extra": {}})")));
  CHECK_THROWS(parse_config(nlohmann::json::parse(R"({"model": {"alpha": -1.0}})")));
  AppConfig seeded;
  seeded.apply_seed(77);
  CHECK(seeded.model.seed == 77);
  CHECK(seeded.train.seed == 77);
  CHECK(seeded.data.seed == 77);
}

TEST_CASE("zero-initialized model rows equal the initial mask baseline") {
  const Corpus corpus = generate_corpus(small_corpus());
  const SplitSpec split;
  const auto eps = test_episodes(corpus, split, 2, 3);
  training::ModelConfig one = small_model(), two = small_model();
  one.flms_mode = two.flms_mode = true;
  one.stages = 1;
  const auto p1 = training::init_params(one), p2 = training::init_params(two);
  const DscRow a = evaluate("k1", eps, split.test_classes, model_segmenter(p1, one));
  const DscRow b = evaluate("k2", eps, split.test_classes, model_segmenter(p2, two), 2);
  const Segmenter direct = [&](const Episode& ep) {
    const auto fs = nn::feature_extract(ep.support_image, p2);
    const auto fq = nn::feature_extract(ep.query_image, p2);
    const auto u0 = proto::init_mask(fq, proto::support_prototypes(fs, ep.support_mask), two.solver());
    return training::predict_mask(u0, ep.query_image.shape());
  };
  const DscRow c = evaluate("init", eps, split.test_classes, direct);
  CHECK(a.per_class == b.per_class);
  CHECK(b.per_class == c.per_class);
  CHECK(b.mean == (b.per_class[0] + b.per_class[1]) / 2.0);
}

TEST_CASE("table formats") {
  DscTable t;
  t.classes = {4, 5};
  t.rows.push_back({"m", {0.5, 0.25}, 0.375});
  CHECK(format_csv(t) == "method," + family_name(4) + "," + family_name(5) + ",Mean\nm,50.0000,25.0000,37.5000\n");
  const std::string text = format_text(t);
  CHECK(text.find("Mean") != std::string::npos);
  CHECK(text.find("37.5000") != std::string::npos);
}

TEST_CASE("segment dump") {
  const Corpus corpus = generate_corpus(small_corpus());
  const Episode ep = make_episode(corpus, 4, 0, 1);
  training::ModelConfig cfg = small_model();
  cfg.flms_mode = true;
  const fs::path dir = scratch("dump");
  const DumpSummary s = segment_dump(ep, training::init_params(cfg), cfg, dir);
  CHECK(s.stages_dumped == 3);
  REQUIRE(s.dice.has_value());
  for (int k = 0; k <= 2; ++k) {
    const auto v = core::read_field<core::DualTag>(dir / ("v1_" + std::to_string(k) + ".lmt"));
    for (double x : v.data()) CHECK(x == 0.0);
    CHECK(fs::exists(dir / ("mask_" + std::to_string(k) + ".pgm")));
    const auto ent = core::read_pgm_pixels(dir / ("entropy_" + std::to_string(k) + ".pgm"));
    CHECK_FALSE(ent.empty());
  }
  CHECK(fs::exists(dir / "final_mask.pgm"));
}

TEST_CASE("entropy image maps ln 2 to full scale") {
  core::SoftMask u({1, 2}, 2);
  u.at(0, 0, 0) = 0.5, u.at(0, 0, 1) = 0.5;
  u.at(0, 1, 0) = 1.0;
  core::ScalarGrid e = core::entropy_map(u);
  for (double& x : e.values()) x /= std::log(2.0);
  const fs::path dir = scratch("entropy");
  core::write_pgm(dir / "e.pgm", e);
  CHECK(core::read_pgm_pixels(dir / "e.pgm") == std::vector<std::uint8_t>{255, 0});
}

TEST_CASE("self check report") {
  const double u1 = brute_force_u1(-1.0, 1.0, 1.0, 1e-3);
  CHECK(u1 == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-3));
  const std::vector<CheckResult> results{{"a", 1e-3, 1e-4, true, "x"}, {"b", 1e-3, 1.0, false, "y"}};
  const std::string report = format_report(results);
  CHECK(report.find("PASS") != std::string::npos);
  CHECK(report.find("FAIL") != std::string::npos);
  CHECK_FALSE(all_passed(results));
}
