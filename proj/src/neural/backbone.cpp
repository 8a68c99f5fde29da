#include <cmath>

#include "lms/neural/networks.hpp"

namespace lms::nn {

using core::GridShape;
using core::InvalidArgument;

namespace {

void add_conv(ParamStore& store, const std::string& prefix, int in, int out, double stddev, std::mt19937_64& rng) {
  store.add(prefix + ".w", normal_tensor({out, 3, 3, in}, stddev, rng), "conv_weight");
  store.add(prefix + ".b", Tensor({out}, 0.0), "conv_bias");
}

double he_std(int fan_in_channels) { return std::sqrt(2.0 / (9.0 * fan_in_channels)); }

}  // namespace

void add_backbone_params(ParamStore& store, const BackboneConfig& cfg, std::mt19937_64& rng) {
  add_conv(store, "backbone.conv1", 1, cfg.width1, he_std(1), rng);
  add_conv(store, "backbone.conv2", cfg.width1, cfg.width2, he_std(cfg.width1), rng);
  add_conv(store, "backbone.conv3", cfg.width2, cfg.channels, std::sqrt(1.0 / (9.0 * cfg.width2)), rng);
}

Var feature_extract(const ParamBinding& params, const Var& image) {
  if (image.value().rank() != 2) throw InvalidArgument("feature_extract: image must be [H, W]");
  Var x = ops::reshape(image, {image.value().dim(0), image.value().dim(1), 1});
  x = ops::relu(ops::conv3x3(x, params["backbone.conv1.w"], params["backbone.conv1.b"], 1));
  x = ops::relu(ops::conv3x3(x, params["backbone.conv2.w"], params["backbone.conv2.b"], 2));
  return ops::conv3x3(x, params["backbone.conv3.w"], params["backbone.conv3.b"], 2);
}

FeatureMap feature_extract(const ScalarGrid& image, const ParamStore& params) {
  Tape tape;
  ParamBinding bound(tape, params, false);
  return to_feature_map(feature_extract(bound, tape.constant(to_tensor(image))).value());
}

// Conversions --------------------------------------------------------------

Tensor to_tensor(const ScalarGrid& g) { return Tensor({g.height(), g.width()}, g.data()); }
Tensor to_tensor(const FeatureMap& f) { return Tensor({f.height(), f.width(), f.channels()}, f.data()); }
Tensor to_tensor(const core::SoftMask& u) { return Tensor({u.height(), u.width(), u.channels()}, u.data()); }
Tensor to_tensor(const core::DualField& v) { return Tensor({v.height(), v.width(), v.channels()}, v.data()); }
Tensor to_tensor(const ProtoBank& p) { return Tensor({p.count(), p.channels()}, p.values()); }
Tensor to_tensor(std::span<const double> vec) {
  return Tensor({static_cast<int>(vec.size())}, std::vector<double>(vec.begin(), vec.end()));
}

ScalarGrid to_scalar_grid(const Tensor& t) {
  if (t.rank() != 2) throw InvalidArgument("expected a rank-2 tensor, got " + t.shape_str());
  return ScalarGrid(GridShape(t.dim(0), t.dim(1)), 1, t.data);
}

FeatureMap to_feature_map(const Tensor& t) {
  if (t.rank() != 3) throw InvalidArgument("expected a rank-3 tensor, got " + t.shape_str());
  return FeatureMap(GridShape(t.dim(0), t.dim(1)), t.dim(2), t.data);
}

core::SoftMask to_soft_mask(const Tensor& t) {
  if (t.rank() != 3 || t.dim(2) != 2) throw InvalidArgument("expected [H, W, 2], got " + t.shape_str());
  return core::SoftMask(GridShape(t.dim(0), t.dim(1)), 2, t.data);
}

core::DualField to_dual(const Tensor& t) {
  if (t.rank() != 3 || t.dim(2) != 2) throw InvalidArgument("expected [H, W, 2], got " + t.shape_str());
  return core::DualField(GridShape(t.dim(0), t.dim(1)), 2, t.data);
}

}  // namespace lms::nn
