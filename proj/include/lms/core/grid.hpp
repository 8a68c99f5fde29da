#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lms::core {

/// Raised when a caller hands in data that violates a type or operation
/// precondition (shape mismatch, out-of-range value, empty region...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridShape {
  int height = 1;
  int width = 1;

  GridShape() = default;
  GridShape(int h, int w);

  std::size_t pixels() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  bool operator==(const GridShape&) const = default;
  std::string str() const;
};

/// Channel-last H x W x C field of doubles. The tag parameter keeps
/// semantically different fields (features, masks, dual variables) from
/// being mixed up at compile time.
template <class Tag>
class Field {
 public:
  Field() = default;
  Field(GridShape shape, int channels, double fill = 0.0)
      : shape_(shape), channels_(channels), values_(shape.pixels() * checked(channels), fill) {}
  Field(GridShape shape, int channels, std::vector<double> values)
      : shape_(shape), channels_(checked(channels)), values_(std::move(values)) {
    if (values_.size() != shape_.pixels() * static_cast<std::size_t>(channels_))
      throw InvalidArgument("field payload size does not match " + shape_.str() + "x" +
                            std::to_string(channels_));
  }

  const GridShape& shape() const { return shape_; }
  int channels() const { return channels_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }

  double at(int y, int x, int c = 0) const { return values_[offset(y, x, c)]; }
  double& at(int y, int x, int c = 0) { return values_[offset(y, x, c)]; }

  /// Pixel-major access by flat pixel index.
  double at(std::size_t pixel, int c) const { return values_[pixel * channels_ + c]; }
  double& at(std::size_t pixel, int c) { return values_[pixel * channels_ + c]; }

  std::span<const double> pixel(std::size_t p) const {
    return {values_.data() + p * channels_, static_cast<std::size_t>(channels_)};
  }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& data() const { return values_; }

 private:
  static int checked(int c) {
    if (c < 1) throw InvalidArgument("field needs at least one channel");
    return c;
  }
  std::size_t offset(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * shape_.width + x) * channels_ + c;
  }

  GridShape shape_;
  int channels_ = 1;
  std::vector<double> values_;
};

struct ScalarTag {};
struct FeatureTag {};
struct SoftMaskTag {};
struct DualTag {};

/// Single-channel per-pixel quantity.
using ScalarGrid = Field<ScalarTag>;
/// Latent features, C channels.
using FeatureMap = Field<FeatureTag>;
/// Two-phase relaxed indicator (u1 = foreground, u2 = background).
using SoftMask = Field<SoftMaskTag>;
/// Unconstrained two-channel dual / correction field.
using DualField = Field<DualTag>;

inline ScalarGrid make_scalar(GridShape s, double fill = 0.0) { return ScalarGrid(s, 1, fill); }
inline SoftMask make_soft_mask(GridShape s) { return SoftMask(s, 2, 0.5); }
inline DualField make_dual(GridShape s) { return DualField(s, 2, 0.0); }

/// Extracts channel c of a multi-channel field.
template <class Tag>
ScalarGrid channel_of(const Field<Tag>& f, int c) {
  ScalarGrid out(f.shape(), 1);
  for (std::size_t p = 0; p < f.shape().pixels(); ++p) out.at(p, 0) = f.at(p, c);
  return out;
}

/// Exact {0,1} per-pixel mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  explicit BinaryMask(GridShape shape) : shape_(shape), values_(shape.pixels(), 0) {}
  BinaryMask(GridShape shape, std::vector<std::uint8_t> values);

  const GridShape& shape() const { return shape_; }
  std::uint8_t at(int y, int x) const { return values_[shape_.index(y, x)]; }
  std::uint8_t at(std::size_t p) const { return values_[p]; }
  void set(int y, int x, bool on) { values_[shape_.index(y, x)] = on ? 1 : 0; }
  void set(std::size_t p, bool on) { values_[p] = on ? 1 : 0; }

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  std::span<const std::uint8_t> values() const { return values_; }

  /// Foreground indicator as a scalar field of 0.0 / 1.0.
  ScalarGrid as_scalar() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  GridShape shape_;
  std::vector<std::uint8_t> values_;
};

/// Integer label per pixel; -1 marks "no label".
class LabelGrid {
 public:
  LabelGrid() = default;
  explicit LabelGrid(GridShape shape, int fill = -1) : shape_(shape), values_(shape.pixels(), fill) {}

  const GridShape& shape() const { return shape_; }
  int at(int y, int x) const { return values_[shape_.index(y, x)]; }
  int at(std::size_t p) const { return values_[p]; }
  int& at(std::size_t p) { return values_[p]; }
  std::span<const int> values() const { return values_; }
  int max_label() const;

  bool operator==(const LabelGrid&) const = default;

 private:
  GridShape shape_;
  std::vector<int> values_;
};

/// Block-averages a mask by an integer factor then thresholds at 0.5
/// (cells with at least half coverage become foreground).
BinaryMask downsample_mask(const BinaryMask& mask, GridShape target);

/// Area-averaged coverage of each target cell, before thresholding.
ScalarGrid area_average(const ScalarGrid& grid, GridShape target);

bool all_finite(std::span<const double> values);

/// Source taps of output index `o` when upsampling a length-n axis by an
/// integer factor with half-pixel centres and clamped edges.
struct BilinearTap {
  int i0 = 0;
  int i1 = 0;
  double w1 = 0.0;
};
BilinearTap bilinear_tap(int o, int factor, int n);

/// Interpolated value from the four corners; one formula for every caller so
/// results agree bit for bit.
inline double bilinear_mix(double v00, double v01, double v10, double v11, double wy, double wx) {
  return (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11);
}

template <class Tag>
Field<Tag> upsample_bilinear(const Field<Tag>& f, int factor) {
  if (factor < 1) throw InvalidArgument("upsample_bilinear: factor must be >= 1");
  const int h = f.height(), w = f.width(), c = f.channels();
  Field<Tag> out(GridShape(h * factor, w * factor), c);
  for (int y = 0; y < h * factor; ++y) {
    const BilinearTap ty = bilinear_tap(y, factor, h);
    for (int x = 0; x < w * factor; ++x) {
      const BilinearTap tx = bilinear_tap(x, factor, w);
      for (int k = 0; k < c; ++k)
        out.at(y, x, k) = bilinear_mix(f.at(ty.i0, tx.i0, k), f.at(ty.i0, tx.i1, k), f.at(ty.i1, tx.i0, k),
                                       f.at(ty.i1, tx.i1, k), ty.w1, tx.w1);
    }
  }
  return out;
}

}  // namespace lms::core
