#include "sacv/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sacv/error.hpp"
#include "sacv/png.hpp"

namespace sacv {

RenderConfig RenderConfig::defaults_for(MapKind kind) {
  RenderConfig cfg;
  cfg.normalization = kind == MapKind::relevance ? Normalization::minmax : Normalization::symmetric;
  return cfg;
}

void RenderConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::BadConfig, "alpha must lie in [0, 1]");
  if (normalization == Normalization::fixed && !(fixed_lo < fixed_hi)) {
    throw Error(ErrorCode::BadRange, "fixed normalization needs lo < hi");
  }
}

Normalization normalization_from_string(std::string_view name) {
  if (name == "minmax") return Normalization::minmax;
  if (name == "symmetric") return Normalization::symmetric;
  if (name == "fixed") return Normalization::fixed;
  throw Error(ErrorCode::BadConfig, "unknown normalization '" + std::string(name) + "'");
}

UpsampleMethod upsample_from_string(std::string_view name) {
  if (name == "nearest") return UpsampleMethod::nearest;
  if (name == "bilinear") return UpsampleMethod::bilinear;
  throw Error(ErrorCode::BadConfig, "unknown upsample method '" + std::string(name) + "'");
}

Colormap colormap_from_string(std::string_view name) {
  if (name == "diverging") return Colormap::diverging_blue_white_red;
  if (name == "sequential") return Colormap::sequential_gray_red;
  throw Error(ErrorCode::BadConfig, "unknown colormap '" + std::string(name) + "'");
}

Grid normalize_map(const ExplanationMap& m, const RenderConfig& cfg) {
  cfg.validate();
  Grid out(m.height, m.width, 0.5);
  if (m.values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(m.values.begin(), m.values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;  // constant map: mid-scale in every mode
  switch (cfg.normalization) {
    case Normalization::minmax:
      for (std::size_t k = 0; k < m.values.size(); ++k) out.values[k] = (m.values[k] - lo) / (hi - lo);
      break;
    case Normalization::symmetric: {
      const double scale = std::max(std::abs(lo), std::abs(hi));
      for (std::size_t k = 0; k < m.values.size(); ++k) {
        out.values[k] = std::clamp(m.values[k] / (2.0 * scale) + 0.5, 0.0, 1.0);
      }
      break;
    }
    case Normalization::fixed:
      for (std::size_t k = 0; k < m.values.size(); ++k) {
        const double v = std::clamp(m.values[k], cfg.fixed_lo, cfg.fixed_hi);
        out.values[k] = (v - cfg.fixed_lo) / (cfg.fixed_hi - cfg.fixed_lo);
      }
      break;
  }
  return out;
}

Grid upsample_map(const Grid& source, int target_height, int target_width, UpsampleMethod method) {
  if (target_height < source.height || target_width < source.width || source.height < 1 ||
      source.width < 1) {
    throw Error(ErrorCode::BadTarget, "upsample target must be at least the source size");
  }
  Grid out(target_height, target_width);
  const double sy = double(source.height) / target_height;
  const double sx = double(source.width) / target_width;
  for (int i = 0; i < target_height; ++i) {
    for (int j = 0; j < target_width; ++j) {
      if (method == UpsampleMethod::nearest) {
        const int y = std::min(source.height - 1, int(std::floor(i * sy)));
        const int x = std::min(source.width - 1, int(std::floor(j * sx)));
        out.at(i, j) = source.at(y, x);
        continue;
      }
      const double y = std::clamp((i + 0.5) * sy - 0.5, 0.0, double(source.height - 1));
      const double x = std::clamp((j + 0.5) * sx - 0.5, 0.0, double(source.width - 1));
      const int y0 = int(std::floor(y)), x0 = int(std::floor(x));
      const int y1 = std::min(y0 + 1, source.height - 1), x1 = std::min(x0 + 1, source.width - 1);
      const double wy = y - y0, wx = x - x0;
      const double top = source.at(y0, x0) * (1 - wx) + source.at(y0, x1) * wx;
      const double bottom = source.at(y1, x0) * (1 - wx) + source.at(y1, x1) * wx;
      out.at(i, j) = std::clamp(top * (1 - wy) + bottom * wy, 0.0, 1.0);
    }
  }
  return out;
}

std::array<double, 3> colormap_rgb(double t, Colormap map) {
  t = std::clamp(t, 0.0, 1.0);
  if (map == Colormap::diverging_blue_white_red) {
    if (t <= 0.5) {
      const double u = t / 0.5;
      return {255.0 * u, 255.0 * u, 255.0};
    }
    const double u = (1.0 - t) / 0.5;
    return {255.0, 255.0 * u, 255.0 * u};
  }
  // light gray -> red
  return {200.0 + 55.0 * t, 200.0 * (1.0 - t), 200.0 * (1.0 - t)};
}

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

std::vector<std::uint8_t> overlay(const Grid& gray, const Grid& heat, const RenderConfig& cfg) {
  cfg.validate();
  if (gray.height != heat.height || gray.width != heat.width) {
    throw Error(ErrorCode::ShapeMismatch, "image and heat map sizes differ");
  }
  std::vector<std::uint8_t> rgb(std::size_t(gray.height) * gray.width * 3);
  for (std::size_t k = 0; k < gray.values.size(); ++k) {
    const double g = 255.0 * std::clamp(gray.values[k], 0.0, 1.0);
    const auto c = colormap_rgb(heat.values[k], cfg.colormap);
    for (int ch = 0; ch < 3; ++ch) rgb[3 * k + ch] = to_byte((1.0 - cfg.alpha) * g + cfg.alpha * c[ch]);
  }
  return encode_png_rgb(gray.width, gray.height, rgb);
}

std::vector<std::uint8_t> heatmap_png(const Grid& heat, const RenderConfig& cfg) {
  cfg.validate();
  std::vector<std::uint8_t> rgb(std::size_t(heat.height) * heat.width * 3);
  for (std::size_t k = 0; k < heat.values.size(); ++k) {
    const auto c = colormap_rgb(heat.values[k], cfg.colormap);
    for (int ch = 0; ch < 3; ++ch) rgb[3 * k + ch] = to_byte(c[ch]);
  }
  return encode_png_rgb(heat.width, heat.height, rgb);
}

std::string rf_report(const ExplanationMap& m, const ArchSpec& arch, std::string_view layer,
                      double fraction) {
  if (m.layer != layer) {
    throw Error(ErrorCode::LayerMismatch, "map layer '" + m.layer + "' vs '" + std::string(layer) + "'");
  }
  const Pair extent = layer_extent(arch, layer);
  if (extent.h != m.height || extent.w != m.width) {
    throw Error(ErrorCode::ShapeMismatch, "map is " + std::to_string(m.height) + "x" +
                                              std::to_string(m.width) + ", arch predicts " +
                                              std::to_string(extent.h) + "x" + std::to_string(extent.w));
  }
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%4s %4s %4s %16s %11s %11s\n", "rank", "i", "j", "value", "rows",
                "cols");
  out += line;
  int rank = 1;
  for (const Location& loc : top_locations(m, fraction)) {
    const PixelRect r = project_location(arch, layer, loc.i, loc.j);
    char rows[32], cols[32];
    std::snprintf(rows, sizeof rows, "%d..%d", r.row0, r.row1);
    std::snprintf(cols, sizeof cols, "%d..%d", r.col0, r.col1);
    std::snprintf(line, sizeof line, "%4d %4d %4d %16.9g %11s %11s\n", rank++, loc.i, loc.j,
                  m.at(loc.i, loc.j), rows, cols);
    out += line;
  }
  return out;
}

}  // namespace sacv
