#pragma once

// Per-location explanation maps for one image at one layer:
//   relevance     S_k[i][j]     = f(x)[:, i, j] . v  (+ bias)
//   contribution  S_k->c[i][j]  = grad_c f(x)[:, i, j] . v
// plus the whole-layer sensitivity baseline (the sum of the contribution map).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sacv/concept_probe.hpp"
#include "sacv/tensor_io.hpp"

namespace sacv {

enum class MapKind { relevance, contribution };

std::string to_string(MapKind kind);

struct Location {
  int i = 0;
  int j = 0;
  bool operator==(const Location&) const = default;
};

struct ExplanationMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major
  MapKind kind = MapKind::relevance;
  std::string layer;
  std::string concept_name;
  std::string image_id;
  std::optional<std::int64_t> class_index;

  double at(int i, int j) const { return values[std::size_t(i) * width + j]; }
  double& at(int i, int j) { return values[std::size_t(i) * width + j]; }
};

struct MapStats {
  double max = 0.0;
  double min = 0.0;
  double mean = 0.0;
  Location argmax;
  Location argmin;
};

struct RelevanceOptions {
  /// Add the (folded) probe bias so the sign reads "concept side of the
  /// hyperplane". Off gives the bare dot product.
  bool with_bias = true;
};

ExplanationMap relevance_map(const Tensor3& activation, const Sacv& s,
                             const RelevanceOptions& options = {});
ExplanationMap contribution_map(const Tensor3& gradient, const Sacv& s);

/// Whole-layer directional derivative: the sum of the contribution map.
double layer_sensitivity(const Tensor3& gradient, const Sacv& s);

/// Fraction of gradients with strictly positive layer sensitivity.
double tcav_score(std::span<const Tensor3> gradients, const Sacv& s);

MapStats map_stats(const ExplanationMap& m);

/// ceil(fraction * H * W) locations by descending value, ties row-major.
std::vector<Location> top_locations(const ExplanationMap& m, double fraction);

/// CSV with header "i,j,value", one row per location, row-major, %.9g.
std::string map_to_csv(const ExplanationMap& m);

DumpRecord map_to_record(const ExplanationMap& m);
ExplanationMap map_from_record(const DumpRecord& record);
void write_map(const ExplanationMap& m, const std::filesystem::path& destination);
ExplanationMap read_map(const std::filesystem::path& source);

}  // namespace sacv
