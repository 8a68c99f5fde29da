#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lms/core/grid.hpp"

namespace lms::core {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// In-memory image of an LMT1 file: dims plus a row-major (channel-last)
/// f64 payload.
struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> data;

  std::size_t element_count() const;
};

// LMT1 layout, all little-endian:
//   "LMT1" | u32 rank | rank x u32 dims | prod(dims) x f64
std::vector<std::uint8_t> encode_lmt1(std::span<const std::uint32_t> dims, std::span<const double> data);
RawTensor decode_lmt1(std::span<const std::uint8_t> bytes);

void write_lmt1(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                std::span<const double> data);
RawTensor read_lmt1(const std::filesystem::path& path);

/// Rank 2 for single-channel fields, rank 3 (H, W, C) otherwise.
template <class Tag>
void write_field(const std::filesystem::path& path, const Field<Tag>& f) {
  std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(f.height()), static_cast<std::uint32_t>(f.width())};
  if (f.channels() > 1) dims.push_back(static_cast<std::uint32_t>(f.channels()));
  write_lmt1(path, dims, f.values());
}

template <class Tag>
Field<Tag> read_field(const std::filesystem::path& path) {
  RawTensor t = read_lmt1(path);
  if (t.dims.size() != 2 && t.dims.size() != 3) throw IoError(path.string() + ": expected rank 2 or 3");
  const int channels = t.dims.size() == 3 ? static_cast<int>(t.dims[2]) : 1;
  return Field<Tag>(GridShape(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1])), channels,
                    std::move(t.data));
}

void write_mask(const std::filesystem::path& path, const BinaryMask& m);
BinaryMask read_mask(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const LabelGrid& labels);
LabelGrid read_labels(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255); pixel = round(255 * clamp(x, 0, 1)).
std::vector<std::uint8_t> encode_pgm(const ScalarGrid& g);
void write_pgm(const std::filesystem::path& path, const ScalarGrid& g);
void write_pgm(const std::filesystem::path& path, const BinaryMask& m);
/// Reads back a P5 file written by write_pgm (values in [0, 255]).
std::vector<std::uint8_t> read_pgm_pixels(const std::filesystem::path& path, GridShape* shape = nullptr);

/// Linear min-max rescaling to [0, 1]; a constant grid maps to all zeros.
ScalarGrid minmax_normalize(const ScalarGrid& g);

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

}  // namespace lms::core
