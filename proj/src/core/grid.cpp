#include "lms/core/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lms::core {

GridShape::GridShape(int h, int w) : height(h), width(w) {
  if (h < 1 || w < 1) throw InvalidArgument("grid shape must be at least 1x1, got " + str());
}

std::string GridShape::str() const { return std::to_string(height) + "x" + std::to_string(width); }

BinaryMask::BinaryMask(GridShape shape, std::vector<std::uint8_t> values)
    : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.pixels()) throw InvalidArgument("binary mask payload size mismatch");
  for (auto v : values_)
    if (v > 1) throw InvalidArgument("binary mask values must be exactly 0 or 1");
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

ScalarGrid BinaryMask::as_scalar() const {
  ScalarGrid out(shape_, 1);
  for (std::size_t p = 0; p < values_.size(); ++p) out.at(p, 0) = values_[p];
  return out;
}

int LabelGrid::max_label() const {
  return values_.empty() ? -1 : *std::max_element(values_.begin(), values_.end());
}

ScalarGrid area_average(const ScalarGrid& grid, GridShape target) {
  const auto& src = grid.shape();
  if (src.height % target.height != 0 || src.width % target.width != 0)
    throw InvalidArgument("cannot area-average " + src.str() + " onto " + target.str());
  const int fy = src.height / target.height;
  const int fx = src.width / target.width;
  const double inv = 1.0 / (fy * fx);
  ScalarGrid out(target, 1);
  for (int y = 0; y < target.height; ++y)
    for (int x = 0; x < target.width; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < fy; ++dy)
        for (int dx = 0; dx < fx; ++dx) acc += grid.at(y * fy + dy, x * fx + dx);
      out.at(y, x) = acc * inv;
    }
  return out;
}

BinaryMask downsample_mask(const BinaryMask& mask, GridShape target) {
  if (mask.shape() == target) return mask;
  const ScalarGrid cover = area_average(mask.as_scalar(), target);
  BinaryMask out(target);
  for (std::size_t p = 0; p < target.pixels(); ++p) out.set(p, cover.at(p, 0) >= 0.5);
  return out;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

BilinearTap bilinear_tap(int o, int factor, int n) {
  const double s = std::clamp((o + 0.5) / factor - 0.5, 0.0, static_cast<double>(n - 1));
  BilinearTap t;
  t.i0 = static_cast<int>(s);
  t.i1 = std::min(t.i0 + 1, n - 1);
  t.w1 = s - t.i0;
  return t;
}

}  // namespace lms::core
