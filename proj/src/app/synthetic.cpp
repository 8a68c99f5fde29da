#include "lms/app/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lms/core/tensor_io.hpp"

namespace lms::app {

using core::InvalidArgument;
using core::IoError;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kMargin = 2;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

/// Shape parameters drawn once per attempt; inside() is evaluated per pixel.
struct Shape {
  ShapeFamily family;
  double cx, cy, cos_t, sin_t, s;
  double p[8];

  bool inside(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double a = (cos_t * dx + sin_t * dy) / s;
    const double b = (-sin_t * dx + cos_t * dy) / s;
    const auto in_circle = [&](double ox, double oy, double r) {
      return (a - ox) * (a - ox) + (b - oy) * (b - oy) <= r * r;
    };
    switch (family) {
      case ShapeFamily::kEllipse:
        return (a / p[0]) * (a / p[0]) + (b / p[1]) * (b / p[1]) <= 1.0;
      case ShapeFamily::kTwoLobe:
        return in_circle(-p[0], 0.0, p[1]) || in_circle(p[0], 0.0, p[2]);
      case ShapeFamily::kRing: {
        const double r2 = a * a + b * b;
        return r2 <= p[0] * p[0] && r2 >= p[1] * p[1];
      }
      case ShapeFamily::kCrescent:
        return in_circle(0.0, 0.0, p[0]) && !in_circle(p[1], 0.0, p[2]);
      case ShapeFamily::kBlobUnion:
        return in_circle(p[0], p[1], p[2]) || in_circle(p[3], p[4], p[5]) || in_circle(-p[0], -p[4], p[6]);
      case ShapeFamily::kNotchedRect:
        return std::abs(a) <= p[0] && std::abs(b) <= p[1] && !(a >= p[0] - p[2] && std::abs(b) <= p[3]);
    }
    return false;
  }
};

Shape draw_shape(int class_id, const SyntheticCorpusConfig& cfg, std::mt19937_64& rng) {
  Shape sh{};
  sh.family = static_cast<ShapeFamily>(class_id % kFamilyCount);
  sh.s = std::min(cfg.height, cfg.width) / 64.0;
  sh.cx = cfg.width * uniform(rng, 0.4, 0.6);
  sh.cy = cfg.height * uniform(rng, 0.4, 0.6);
  const double t = uniform(rng, 0.0, 2.0 * kPi);
  sh.cos_t = std::cos(t);
  sh.sin_t = std::sin(t);
  double* p = sh.p;
  switch (sh.family) {
    case ShapeFamily::kEllipse:
      p[0] = uniform(rng, 9.0, 15.0);
      p[1] = uniform(rng, 6.0, 10.0);
      break;
    case ShapeFamily::kTwoLobe:
      p[0] = uniform(rng, 7.0, 9.0);
      p[1] = uniform(rng, 6.0, 8.5);
      p[2] = uniform(rng, 6.0, 8.5);
      break;
    case ShapeFamily::kRing:
      p[0] = uniform(rng, 12.0, 17.0);
      p[1] = p[0] * uniform(rng, 0.45, 0.6);
      break;
    case ShapeFamily::kCrescent:
      p[0] = uniform(rng, 12.0, 16.0);
      p[1] = p[0] * uniform(rng, 0.4, 0.55);
      p[2] = p[0] * uniform(rng, 0.8, 0.9);
      break;
    case ShapeFamily::kBlobUnion:
      p[0] = uniform(rng, 3.0, 7.0);
      p[1] = uniform(rng, -6.0, 6.0);
      p[2] = uniform(rng, 6.0, 9.0);
      p[3] = uniform(rng, -7.0, -3.0);
      p[4] = uniform(rng, -6.0, 6.0);
      p[5] = uniform(rng, 5.0, 8.0);
      p[6] = uniform(rng, 5.0, 8.0);
      break;
    case ShapeFamily::kNotchedRect:
      p[0] = uniform(rng, 10.0, 15.0);
      p[1] = uniform(rng, 8.0, 12.0);
      p[2] = p[0] * uniform(rng, 0.6, 0.9);
      p[3] = p[1] * uniform(rng, 0.3, 0.45);
      break;
  }
  return sh;
}

bool within_margin(const BinaryMask& m) {
  const GridShape& s = m.shape();
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (m.at(y, x) && (y < kMargin || x < kMargin || y >= s.height - kMargin || x >= s.width - kMargin))
        return false;
  return true;
}

}  // namespace

double standard_normal(std::mt19937_64& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

std::string family_name(int class_id) {
  static const char* names[] = {"ellipse", "two_lobe", "ring", "crescent", "blob_union", "notched_rect"};
  return names[((class_id % kFamilyCount) + kFamilyCount) % kFamilyCount];
}

void SyntheticCorpusConfig::validate() const {
  if (height < 16 || width < 16 || height % 4 != 0 || width % 4 != 0)
    throw InvalidArgument("corpus: image sides must be >= 16 and divisible by 4");
  if (classes < 1 || classes > kFamilyCount)
    throw InvalidArgument("corpus: classes must be in [1, " + std::to_string(kFamilyCount) + "]");
  if (instances_per_class < 2) throw InvalidArgument("corpus: need at least 2 instances per class");
  if (noise_sigma < 0.0 || deformation < 0.0 || shading < 0.0)
    throw InvalidArgument("corpus: noise, deformation and shading must be >= 0");
}

Instance make_instance(const SyntheticCorpusConfig& cfg, int class_id, int index) {
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(class_id), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  const GridShape shape(cfg.height, cfg.width);
  const GridShape feature_shape(cfg.height / 4, cfg.width / 4);

  Instance inst;
  inst.class_id = class_id;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 200) throw InvalidArgument("corpus: cannot place a " + family_name(class_id) + " inside the margin");
    const Shape sh = draw_shape(class_id, cfg, rng);
    const double ax = cfg.deformation * uniform(rng, 0.5, 1.0), ay = cfg.deformation * uniform(rng, 0.5, 1.0);
    const double kx = 1.0 + static_cast<double>(rng() % 2), ky = 1.0 + static_cast<double>(rng() % 2);
    const double px = uniform(rng, 0.0, 2.0 * kPi), py = uniform(rng, 0.0, 2.0 * kPi);
    BinaryMask m(shape);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        const double fx = x + 0.5, fy = y + 0.5;
        const double wx = fx + ax * std::sin(2.0 * kPi * ky * fy / cfg.height + px);
        const double wy = fy + ay * std::sin(2.0 * kPi * kx * fx / cfg.width + py);
        m.set(y, x, sh.inside(wx, wy));
      }
    if (m.empty() || !within_margin(m) || core::downsample_mask(m, feature_shape).empty()) continue;
    inst.mask = std::move(m);
    break;
  }

  const double ramp_angle = uniform(rng, 0.0, 2.0 * kPi);
  const double rc = std::cos(ramp_angle), rs = std::sin(ramp_angle);
  inst.image = core::make_scalar(shape);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      const double t = (rc * (x - cfg.width / 2.0) / cfg.width + rs * (y - cfg.height / 2.0) / cfg.height);
      double v = cfg.background + cfg.contrast * inst.mask.at(y, x) + cfg.shading * t;
      if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * standard_normal(rng);
      inst.image.at(y, x) = std::clamp(v, 0.0, 1.0);
    }
  return inst;
}

SyntheticCorpusConfig separable_config(double noise_sigma, std::uint64_t seed) {
  SyntheticCorpusConfig cfg;
  cfg.background = 0.0;
  cfg.contrast = 1.0;
  cfg.shading = 0.0;
  cfg.noise_sigma = noise_sigma;
  cfg.seed = seed;
  return cfg;
}

Corpus generate_corpus(const SyntheticCorpusConfig& cfg) {
  cfg.validate();
  Corpus c;
  c.config = cfg;
  c.instances.resize(static_cast<std::size_t>(cfg.classes));
  for (int k = 0; k < cfg.classes; ++k)
    for (int i = 0; i < cfg.instances_per_class; ++i) c.instances[k].push_back(make_instance(cfg, k, i));
  return c;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream index;
  index << "class_id,instance,image,mask\n";
  for (int k = 0; k < corpus.class_count(); ++k)
    for (std::size_t i = 0; i < corpus.instances[k].size(); ++i) {
      const std::string stem = "c" + std::to_string(k) + "_i" + std::to_string(i);
      core::write_field(dir / (stem + "_image.lmt"), corpus.instances[k][i].image);
      core::write_mask(dir / (stem + "_mask.lmt"), corpus.instances[k][i].mask);
      index << k << "," << i << "," << stem << "_image.lmt," << stem << "_mask.lmt\n";
    }
  std::ofstream os(dir / "index.csv", std::ios::binary);
  if (!os) throw IoError("cannot write " + (dir / "index.csv").string());
  os << index.str();
}

Corpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream is(dir / "index.csv");
  if (!is) throw IoError("no index.csv in " + dir.string());
  Corpus c;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cls, idx, image, mask;
    if (!std::getline(row, cls, ',') || !std::getline(row, idx, ',') || !std::getline(row, image, ',') ||
        !std::getline(row, mask, ','))
      throw IoError("malformed index.csv row: " + line);
    const int k = std::stoi(cls);
    if (k < 0) throw IoError("negative class id in index.csv");
    if (c.instances.size() <= static_cast<std::size_t>(k)) c.instances.resize(static_cast<std::size_t>(k) + 1);
    Instance inst;
    inst.class_id = k;
    inst.image = core::read_field<core::ScalarTag>(dir / image);
    inst.mask = core::read_mask(dir / mask);
    c.instances[k].push_back(std::move(inst));
  }
  if (c.instances.empty()) throw IoError("empty corpus in " + dir.string());
  const Instance& first = c.instances.front().front();
  c.config.height = first.image.height();
  c.config.width = first.image.width();
  c.config.classes = c.class_count();
  return c;
}

}  // namespace lms::app
