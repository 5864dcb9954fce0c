#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sacv {

enum class LayerKind { conv, pool, elementwise };

struct Pair {
  int h = 1;
  int w = 1;
  bool operator==(const Pair&) const = default;
};

struct LayerGeom {
  std::string name;
  LayerKind kind = LayerKind::elementwise;
  Pair kernel{1, 1};
  Pair stride{1, 1};
  Pair padding{0, 0};

  bool operator==(const LayerGeom&) const = default;
};

/// Sequential network geometry, in forward-pass order.
struct ArchSpec {
  Pair input_size{1, 1};
  std::vector<LayerGeom> layers;

  bool operator==(const ArchSpec&) const = default;
};

/// Accumulated receptive-field geometry of one layer, per axis.
/// `start` is the input-space center of location (0, 0).
struct RfGeometry {
  double rf_h = 1.0, rf_w = 1.0;
  double jump_h = 1.0, jump_w = 1.0;
  double start_h = 0.0, start_w = 0.0;
};

/// Inclusive pixel rectangle.
struct PixelRect {
  int row0 = 0, row1 = 0, col0 = 0, col1 = 0;
  bool operator==(const PixelRect&) const = default;
};

std::string to_string(LayerKind kind);

ArchSpec parse_arch(std::string_view text);
std::string arch_to_json(const ArchSpec& arch);
/// Throws DuplicateLayer / NonPositiveField for a malformed spec.
void validate_arch(const ArchSpec& arch);

/// Folds the receptive-field recurrence over all layers up to and including
/// `layer`:  r' = r + (k-1) j,  j' = j s,  start' = start + ((k-1)/2 - p) j.
RfGeometry layer_geometry(const ArchSpec& arch, std::string_view layer);
/// Geometry of an arbitrary prefix of the layer list (0 = the input itself).
RfGeometry prefix_geometry(const ArchSpec& arch, std::size_t layer_count);

/// Spatial extent (H, W) of `layer`'s output for the arch's input size.
Pair layer_extent(const ArchSpec& arch, std::string_view layer);

/// Input pixels that can influence location (i, j) of `layer`, rounded
/// outward and clipped to the input. Never empty.
PixelRect project_location(const ArchSpec& arch, std::string_view layer, int i, int j);

}  // namespace sacv
