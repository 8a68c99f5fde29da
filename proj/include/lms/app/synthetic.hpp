#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lms/core/grid.hpp"

namespace lms::app {

using core::BinaryMask;
using core::GridShape;
using core::ScalarGrid;

/// Shape families, in class-id order.
enum class ShapeFamily { kEllipse, kTwoLobe, kRing, kCrescent, kBlobUnion, kNotchedRect };

inline constexpr int kFamilyCount = 6;
std::string family_name(int class_id);

struct SyntheticCorpusConfig {
  int height = 64;
  int width = 64;
  int classes = kFamilyCount;
  int instances_per_class = 16;
  double background = 0.2;
  double contrast = 0.6;
  /// Amplitude of a smooth intensity ramp over the whole image.
  double shading = 0.05;
  double noise_sigma = 0.05;
  /// Peak displacement of the sinusoidal warp, in pixels.
  double deformation = 1.5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Instance {
  ScalarGrid image;
  BinaryMask mask;
  int class_id = 0;
};

struct Corpus {
  SyntheticCorpusConfig config;
  /// instances[c] holds every instance of class c.
  std::vector<std::vector<Instance>> instances;

  int class_count() const { return static_cast<int>(instances.size()); }
};

/// Mask and noiseless rendering depend only on (seed, class, index).
Instance make_instance(const SyntheticCorpusConfig& cfg, int class_id, int index);
Corpus generate_corpus(const SyntheticCorpusConfig& cfg);

/// Two-blob images with binary intensities (background 0, foreground 1, no
/// shading), so the classes separate in intensity up to the added noise.
inline constexpr int kSeparableClass = static_cast<int>(ShapeFamily::kBlobUnion);
SyntheticCorpusConfig separable_config(double noise_sigma, std::uint64_t seed);

/// index.csv (class_id,instance,image,mask) plus one LMT1 image and mask
/// per instance.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

/// Portable standard normal draw (Box–Muller on raw 64-bit output).
double standard_normal(std::mt19937_64& rng);

}  // namespace lms::app
