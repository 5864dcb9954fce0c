#pragma once

// Turning explanation maps into pictures and tables: normalization to
// [0, 1], upsampling to input resolution, colour overlays (PNG), and
// receptive-field listings of the top-ranked locations.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sacv/explanation_maps.hpp"
#include "sacv/receptive_field.hpp"

namespace sacv {

/// Plain H x W scalar grid, row-major.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int h, int w, double fill = 0.0) : height(h), width(w), values(std::size_t(h) * w, fill) {}

  double at(int i, int j) const { return values[std::size_t(i) * width + j]; }
  double& at(int i, int j) { return values[std::size_t(i) * width + j]; }
};

enum class Normalization { minmax, symmetric, fixed };
enum class UpsampleMethod { nearest, bilinear };
enum class Colormap { diverging_blue_white_red, sequential_gray_red };

struct RenderConfig {
  Normalization normalization = Normalization::minmax;
  double fixed_lo = 0.0;  // used by Normalization::fixed
  double fixed_hi = 1.0;
  UpsampleMethod upsample = UpsampleMethod::nearest;
  double alpha = 0.6;
  Colormap colormap = Colormap::diverging_blue_white_red;

  /// Relevance maps default to min-max, contribution maps to symmetric
  /// (sign carries meaning there).
  static RenderConfig defaults_for(MapKind kind);
  void validate() const;
};

Normalization normalization_from_string(std::string_view name);
UpsampleMethod upsample_from_string(std::string_view name);
Colormap colormap_from_string(std::string_view name);

/// minmax: (v - min) / (max - min); symmetric: v / (2 max|v|) + 0.5;
/// fixed: clamp to [lo, hi] then scale. Constant maps (including all-zero)
/// become 0.5 in every mode.
Grid normalize_map(const ExplanationMap& m, const RenderConfig& cfg);

/// Nearest: source index floor(i * H / H0). Bilinear: align-corners-false,
/// sample center (i + 0.5) * (H / H0) - 0.5, clamped to the edge.
Grid upsample_map(const Grid& source, int target_height, int target_width, UpsampleMethod method);

/// Colour of t in [0, 1] as RGB in [0, 255] (not yet rounded).
std::array<double, 3> colormap_rgb(double t, Colormap map);

/// Per-pixel (1 - alpha) * gray + alpha * colormap(value), rounded to 8-bit
/// RGB and PNG-encoded. `gray` holds intensities in [0, 1].
std::vector<std::uint8_t> overlay(const Grid& gray, const Grid& heat, const RenderConfig& cfg);

/// The colormapped heat grid alone.
std::vector<std::uint8_t> heatmap_png(const Grid& heat, const RenderConfig& cfg);

/// Fixed-width table of the top `fraction` locations with their input
/// rectangles.
std::string rf_report(const ExplanationMap& m, const ArchSpec& arch, std::string_view layer,
                      double fraction);

}  // namespace sacv
