#include "lms/core/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lms::core {

namespace {

constexpr char kMagic[4] = {'L', 'M', 'T', '1'};

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <class T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw IoError("LMT1: truncated payload");
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, bytes.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace

std::size_t RawTensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_lmt1(std::span<const std::uint32_t> dims, std::span<const double> data) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  if (n != data.size()) throw IoError("LMT1: payload has " + std::to_string(data.size()) +
                                      " values but dims describe " + std::to_string(n));
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * dims.size() + 8 * data.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_le<std::uint32_t>(out, d);
  for (double v : data) put_le<double>(out, v);
  return out;
}

RawTensor decode_lmt1(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
    throw IoError("LMT1: bad magic");
  std::size_t pos = 4;
  RawTensor t;
  const auto rank = get_le<std::uint32_t>(bytes, pos);
  if (rank > 16) throw IoError("LMT1: implausible rank " + std::to_string(rank));
  t.dims.resize(rank);
  for (auto& d : t.dims) d = get_le<std::uint32_t>(bytes, pos);
  const std::size_t n = t.element_count();
  if (bytes.size() - pos != n * sizeof(double)) throw IoError("LMT1: payload size does not match dims");
  t.data.resize(n);
  for (auto& v : t.data) v = get_le<double>(bytes, pos);
  return t;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

void write_lmt1(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                std::span<const double> data) {
  write_bytes(path, encode_lmt1(dims, data));
}

RawTensor read_lmt1(const std::filesystem::path& path) { return decode_lmt1(read_bytes(path)); }

void write_mask(const std::filesystem::path& path, const BinaryMask& m) {
  const ScalarGrid g = m.as_scalar();
  write_field(path, g);
}

BinaryMask read_mask(const std::filesystem::path& path) {
  const ScalarGrid g = read_field<ScalarTag>(path);
  BinaryMask m(g.shape());
  for (std::size_t p = 0; p < g.shape().pixels(); ++p) {
    const double v = g.at(p, 0);
    if (v != 0.0 && v != 1.0) throw IoError(path.string() + ": mask value is not 0 or 1");
    m.set(p, v == 1.0);
  }
  return m;
}

void write_labels(const std::filesystem::path& path, const LabelGrid& labels) {
  ScalarGrid g(labels.shape(), 1);
  for (std::size_t p = 0; p < labels.shape().pixels(); ++p) g.at(p, 0) = labels.at(p);
  write_field(path, g);
}

LabelGrid read_labels(const std::filesystem::path& path) {
  const ScalarGrid g = read_field<ScalarTag>(path);
  LabelGrid labels(g.shape());
  for (std::size_t p = 0; p < g.shape().pixels(); ++p) {
    const double v = g.at(p, 0);
    if (v != std::floor(v)) throw IoError(path.string() + ": label is not an integer");
    labels.at(p) = static_cast<int>(v);
  }
  return labels;
}

std::vector<std::uint8_t> encode_pgm(const ScalarGrid& g) {
  const std::string header = "P5\n" + std::to_string(g.width()) + " " + std::to_string(g.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + g.shape().pixels());
  for (std::size_t p = 0; p < g.shape().pixels(); ++p) {
    const double x = std::clamp(g.at(p, 0), 0.0, 1.0);
    out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * x)));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const ScalarGrid& g) { write_bytes(path, encode_pgm(g)); }

void write_pgm(const std::filesystem::path& path, const BinaryMask& m) { write_pgm(path, m.as_scalar()); }

std::vector<std::uint8_t> read_pgm_pixels(const std::filesystem::path& path, GridShape* shape) {
  const auto bytes = read_bytes(path);
  std::string text(bytes.begin(), bytes.end());
  std::istringstream is(text);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w < 1 || h < 1) throw IoError(path.string() + ": not a P5/255 PGM");
  is.get();
  const auto offset = static_cast<std::size_t>(is.tellg());
  if (bytes.size() - offset != static_cast<std::size_t>(w) * h) throw IoError(path.string() + ": truncated PGM");
  if (shape) *shape = GridShape(h, w);
  return {bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end()};
}

ScalarGrid minmax_normalize(const ScalarGrid& g) {
  const auto v = g.values();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  ScalarGrid out(g.shape(), 1);
  const double range = *hi - *lo;
  if (range <= 0.0) return out;
  for (std::size_t p = 0; p < g.shape().pixels(); ++p) out.at(p, 0) = (g.at(p, 0) - *lo) / range;
  return out;
}

}  // namespace lms::core
