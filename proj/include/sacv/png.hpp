#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sacv {

/// 8-bit RGB PNG with fixed encoder settings (filter 0 on every row, zlib
/// level 9, no ancillary chunks), so equal pixels give equal bytes.
std::vector<std::uint8_t> encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb);

}  // namespace sacv
