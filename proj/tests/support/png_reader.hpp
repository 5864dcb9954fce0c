#pragma once

// Minimal reader for the PNGs this project writes (8-bit RGB, no interlace,
// filter type 0 on every row). Enough to check pixels in tests.

#include <zlib.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sacv::testing {

struct DecodedPng {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
  std::vector<std::string> chunk_types;
};

inline std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
}

inline DecodedPng decode_png(const std::vector<std::uint8_t>& bytes) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() < 8 || !std::equal(sig, sig + 8, bytes.begin())) throw std::runtime_error("not a PNG");
  DecodedPng out;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = read_be32(&bytes[pos]);
    const std::string type(bytes.begin() + pos + 4, bytes.begin() + pos + 8);
    out.chunk_types.push_back(type);
    const std::uint8_t* data = &bytes[pos + 8];
    if (type == "IHDR") {
      out.width = int(read_be32(data));
      out.height = int(read_be32(data + 4));
      if (data[8] != 8 || data[9] != 2) throw std::runtime_error("not 8-bit RGB");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    }
    const std::uint32_t crc = read_be32(data + len);
    if (crc != crc32(0, &bytes[pos + 4], len + 4)) throw std::runtime_error("bad CRC in " + type);
    pos += 12 + len;
  }
  const std::size_t stride = std::size_t(out.width) * 3 + 1;
  std::vector<std::uint8_t> raw(stride * out.height);
  uLongf raw_len = raw.size();
  if (uncompress(raw.data(), &raw_len, idat.data(), idat.size()) != Z_OK || raw_len != raw.size()) {
    throw std::runtime_error("bad IDAT stream");
  }
  for (int y = 0; y < out.height; ++y) {
    if (raw[y * stride] != 0) throw std::runtime_error("unexpected filter type");
    out.rgb.insert(out.rgb.end(), raw.begin() + y * stride + 1, raw.begin() + (y + 1) * stride);
  }
  return out;
}

}  // namespace sacv::testing
