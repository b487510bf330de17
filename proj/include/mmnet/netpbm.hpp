#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mmnet/error.hpp"
#include "mmnet/tensor.hpp"

// Binary netpbm I/O: P6 (rgb images) and P5 (gray maps / masks), maxval 255.
// Reads scale bytes to [0,1]; mask reads threshold at >127; writes scale
// [0,1] to bytes rounding half up. Parse errors report the byte offset.

namespace mmnet {

namespace detail {

struct PbmCursor {
  std::vector<unsigned char> bytes;
  std::size_t pos = 0;
  std::string path;

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path + ": " + what + " (byte offset " + std::to_string(pos) + ")");
  }

  bool eof() const { return pos >= bytes.size(); }
  unsigned char peek() const { return bytes[pos]; }

  void skip_space_and_comments() {
    while (!eof()) {
      unsigned char c = peek();
      if (c == '#') {
        while (!eof() && peek() != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  }

  int read_int(const char* what) {
    skip_space_and_comments();
    if (eof() || peek() < '0' || peek() > '9') fail(std::string("expected ") + what);
    long v = 0;
    while (!eof() && peek() >= '0' && peek() <= '9') {
      v = v * 10 + (peek() - '0');
      if (v > 1 << 24) fail(std::string(what) + " out of range");
      ++pos;
    }
    return static_cast<int>(v);
  }
};

inline PbmCursor load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open for reading");
  PbmCursor cur;
  cur.path = path;
  cur.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return cur;
}

// Parses the header "<magic> w h 255" and positions the cursor at the first
// payload byte (exactly one whitespace byte separates maxval and payload).
inline std::pair<int, int> parse_header(PbmCursor& cur, char kind) {
  if (cur.bytes.size() < 2 || cur.bytes[0] != 'P' || cur.bytes[1] != kind) {
    cur.pos = 0;
    cur.fail(std::string("bad magic, expected P") + kind);
  }
  cur.pos = 2;
  const int w = cur.read_int("width");
  const int h = cur.read_int("height");
  const int maxval = cur.read_int("maxval");
  if (w <= 0 || h <= 0) cur.fail("non-positive image extents");
  if (maxval != 255) cur.fail("unsupported maxval " + std::to_string(maxval) + ", expected 255");
  if (cur.eof()) cur.fail("missing whitespace after maxval");
  const unsigned char sep = cur.peek();
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') cur.fail("expected single whitespace after maxval");
  ++cur.pos;
  return {w, h};
}

inline void require_payload(PbmCursor& cur, std::size_t need) {
  const std::size_t have = cur.bytes.size() - cur.pos;
  if (have < need) {
    cur.pos = cur.bytes.size();
    cur.fail("truncated payload: need " + std::to_string(need) + " bytes, have " + std::to_string(have));
  }
}

inline unsigned char quantize(double v) {
  v = std::min(1.0, std::max(0.0, v));
  return static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
}

}  // namespace detail

// P6 rgb image -> [3,H,W] with values in [0,1].
inline Tensor read_ppm(const std::string& path) {
  detail::PbmCursor cur = detail::load_file(path);
  auto [w, h] = detail::parse_header(cur, '6');
  const std::size_t npx = static_cast<std::size_t>(w) * h;
  detail::require_payload(cur, npx * 3);
  std::vector<double> data(npx * 3);
  const unsigned char* src = cur.bytes.data() + cur.pos;
  for (std::size_t p = 0; p < npx; ++p) {
    for (int c = 0; c < 3; ++c) data[static_cast<std::size_t>(c) * npx + p] = src[p * 3 + c] / 255.0;
  }
  return Tensor::from_data({3, h, w}, std::move(data));
}

// P5 gray map -> [H,W] with values in [0,1].
inline Tensor read_pgm(const std::string& path) {
  detail::PbmCursor cur = detail::load_file(path);
  auto [w, h] = detail::parse_header(cur, '5');
  const std::size_t npx = static_cast<std::size_t>(w) * h;
  detail::require_payload(cur, npx);
  std::vector<double> data(npx);
  const unsigned char* src = cur.bytes.data() + cur.pos;
  for (std::size_t p = 0; p < npx; ++p) data[p] = src[p] / 255.0;
  return Tensor::from_data({h, w}, std::move(data));
}

// P5 mask -> binary [H,W]; foreground where the byte is > 127.
inline Tensor read_pgm_mask(const std::string& path) {
  detail::PbmCursor cur = detail::load_file(path);
  auto [w, h] = detail::parse_header(cur, '5');
  const std::size_t npx = static_cast<std::size_t>(w) * h;
  detail::require_payload(cur, npx);
  std::vector<double> data(npx);
  const unsigned char* src = cur.bytes.data() + cur.pos;
  for (std::size_t p = 0; p < npx; ++p) data[p] = src[p] > 127 ? 1.0 : 0.0;
  return Tensor::from_data({h, w}, std::move(data));
}

inline void write_pgm(const Tensor& map, const std::string& path) {
  if (map.rank() != 2) throw std::invalid_argument("write_pgm expects [H,W], got " + shape_str(map.shape()));
  const int h = map.extent(0), w = map.extent(1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "P5\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = detail::quantize(map.at(y, x));
    out.write(reinterpret_cast<const char*>(row.data()), w);
  }
  if (!out) throw DataError(path + ": write failed");
}

inline void write_ppm(const Tensor& image, const std::string& path) {
  if (image.rank() != 3 || image.extent(0) != 3) {
    throw std::invalid_argument("write_ppm expects [3,H,W], got " + shape_str(image.shape()));
  }
  const int h = image.extent(1), w = image.extent(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = detail::quantize(image.at(c, y, x));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError(path + ": write failed");
}

}  // namespace mmnet
