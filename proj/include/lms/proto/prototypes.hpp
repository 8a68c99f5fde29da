#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lms/core/grid.hpp"
#include "lms/solver/fidelity.hpp"

namespace lms::proto {

using core::BinaryMask;
using core::FeatureMap;
using core::GridShape;
using core::LabelGrid;
using core::ScalarGrid;
using core::SoftMask;
using solver::PrototypePair;
using solver::SolverConfig;

/// N_p representative prototypes, row-major N_p x C.
class ProtoBank {
 public:
  ProtoBank() = default;
  ProtoBank(int count, int channels, std::vector<double> values);

  int count() const { return count_; }
  int channels() const { return channels_; }
  std::span<const double> row(int n) const {
    return {values_.data() + static_cast<std::size_t>(n) * channels_, static_cast<std::size_t>(channels_)};
  }
  const std::vector<double>& values() const { return values_; }

 private:
  int count_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

/// One 1-way 1-shot task.
struct Episode {
  ScalarGrid support_image;
  BinaryMask support_mask;
  ScalarGrid query_image;
  std::optional<BinaryMask> query_gt;
  int class_id = -1;

  /// Throws if shapes differ or the support mask is empty.
  void validate() const;
};

/// l1 = masked average of support features over the (downsampled) support
/// foreground, l2 = -l1.
PrototypePair support_prototypes(const FeatureMap& support_features, const BinaryMask& support_mask);

/// Initial query mask: data consistency with a zero dual field.
SoftMask init_mask(const FeatureMap& query_features, const PrototypePair& l0, const SolverConfig& cfg);

/// Splits the foreground into n_regions Voronoi cells around farthest-point
/// seeds. Background pixels get -1. rng_seed only breaks distance ties.
LabelGrid voronoi_partition(const BinaryMask& mask, int n_regions, std::uint64_t rng_seed);

/// Masked average pooling per Voronoi region. Labels given at a finer
/// resolution than the features are area-downsampled first; regions that
/// vanish at feature scale are dropped.
ProtoBank representative_prototypes(const FeatureMap& support_features, const LabelGrid& labels);

/// Per-region pixel counts at feature resolution, in bank row order.
std::vector<std::size_t> region_sizes(const FeatureMap& support_features, const LabelGrid& labels);

}  // namespace lms::proto
