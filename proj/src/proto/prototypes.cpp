#include "lms/proto/prototypes.hpp"

#include "lms/core/metrics.hpp"

namespace lms::proto {

using core::InvalidArgument;

ProtoBank::ProtoBank(int count, int channels, std::vector<double> values)
    : count_(count), channels_(channels), values_(std::move(values)) {
  if (count < 1 || channels < 1) throw InvalidArgument("proto bank needs at least one row and channel");
  if (values_.size() != static_cast<std::size_t>(count) * channels)
    throw InvalidArgument("proto bank payload size mismatch");
  if (!core::all_finite(values_)) throw InvalidArgument("proto bank has non-finite entries");
}

void Episode::validate() const {
  const GridShape s = support_image.shape();
  if (!(support_mask.shape() == s) || !(query_image.shape() == s))
    throw InvalidArgument("episode: support/query shapes differ");
  if (query_gt && !(query_gt->shape() == s)) throw InvalidArgument("episode: query ground truth shape differs");
  if (support_mask.empty()) throw InvalidArgument("episode: support mask is empty");
}

PrototypePair support_prototypes(const FeatureMap& support_features, const BinaryMask& support_mask) {
  const BinaryMask fg = core::downsample_mask(support_mask, support_features.shape());
  if (fg.empty()) throw InvalidArgument("support mask vanishes at feature scale");
  PrototypePair l;
  l.l1 = solver::map_pool(support_features, fg.as_scalar(), 1.0);
  l.l2.resize(l.l1.size());
  for (std::size_t k = 0; k < l.l1.size(); ++k) l.l2[k] = -l.l1[k];
  return l;
}

SoftMask init_mask(const FeatureMap& query_features, const PrototypePair& l0, const SolverConfig& cfg) {
  return solver::data_consistency(query_features, l0, core::make_dual(query_features.shape()), cfg);
}

namespace {

/// Indicator of each label at feature resolution.
std::vector<BinaryMask> region_masks(const FeatureMap& features, const LabelGrid& labels) {
  const int n = labels.max_label() + 1;
  std::vector<BinaryMask> out;
  for (int j = 0; j < n; ++j) {
    BinaryMask m(labels.shape());
    for (std::size_t p = 0; p < labels.shape().pixels(); ++p) m.set(p, labels.at(p) == j);
    out.push_back(core::downsample_mask(m, features.shape()));
  }
  return out;
}

}  // namespace

ProtoBank representative_prototypes(const FeatureMap& support_features, const LabelGrid& labels) {
  std::vector<double> rows;
  int count = 0;
  for (const BinaryMask& m : region_masks(support_features, labels)) {
    if (m.empty()) continue;
    const auto l = solver::map_pool(support_features, m.as_scalar(), 1.0);
    rows.insert(rows.end(), l.begin(), l.end());
    ++count;
  }
  if (count == 0) throw InvalidArgument("representative_prototypes: every region vanishes at feature scale");
  return ProtoBank(count, support_features.channels(), std::move(rows));
}

std::vector<std::size_t> region_sizes(const FeatureMap& support_features, const LabelGrid& labels) {
  std::vector<std::size_t> sizes;
  for (const BinaryMask& m : region_masks(support_features, labels))
    if (!m.empty()) sizes.push_back(m.count());
  return sizes;
}

}  // namespace lms::proto
