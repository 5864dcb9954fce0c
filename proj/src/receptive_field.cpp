#include "sacv/receptive_field.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "sacv/error.hpp"

namespace sacv {
namespace {

using nlohmann::json;

Pair read_pair(const json& layer, const char* key, const std::string& where, bool allow_zero) {
  if (!layer.contains(key)) {
    throw Error(ErrorCode::ParseError, where + ": missing field '" + key + "'");
  }
  const auto& v = layer[key];
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
    throw Error(ErrorCode::ParseError, where + ": field '" + key + "' must be [int, int]");
  }
  Pair p{v[0].get<int>(), v[1].get<int>()};
  const int floor = allow_zero ? 0 : 1;
  if (p.h < floor || p.w < floor) {
    throw Error(ErrorCode::NonPositiveField, where + ": field '" + key + "' out of range");
  }
  return p;
}

std::size_t find_layer(const ArchSpec& arch, std::string_view layer) {
  for (std::size_t n = 0; n < arch.layers.size(); ++n) {
    if (arch.layers[n].name == layer) return n;
  }
  throw Error(ErrorCode::UnknownLayer, "no layer named '" + std::string(layer) + "'");
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::pool: return "pool";
    case LayerKind::elementwise: return "elementwise";
  }
  return "elementwise";
}

void validate_arch(const ArchSpec& arch) {
  if (arch.input_size.h < 1 || arch.input_size.w < 1) {
    throw Error(ErrorCode::NonPositiveField, "input_size must be positive");
  }
  std::set<std::string> seen;
  for (const auto& l : arch.layers) {
    if (l.name.empty()) throw Error(ErrorCode::ParseError, "layer with empty name");
    if (!seen.insert(l.name).second) throw Error(ErrorCode::DuplicateLayer, l.name);
    if (l.kernel.h < 1 || l.kernel.w < 1 || l.stride.h < 1 || l.stride.w < 1 ||
        l.padding.h < 0 || l.padding.w < 0) {
      throw Error(ErrorCode::NonPositiveField, "layer '" + l.name + "'");
    }
  }
}

ArchSpec parse_arch(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "document must be a JSON object");

  ArchSpec arch;
  arch.input_size = read_pair(doc, "input_size", "document", false);
  if (!doc.contains("layers") || !doc["layers"].is_array()) {
    throw Error(ErrorCode::ParseError, "document: 'layers' must be an array");
  }
  std::size_t index = 0;
  for (const auto& entry : doc["layers"]) {
    const std::string where = "layers[" + std::to_string(index++) + "]";
    if (!entry.is_object()) throw Error(ErrorCode::ParseError, where + ": must be an object");
    if (!entry.contains("name") || !entry["name"].is_string()) {
      throw Error(ErrorCode::ParseError, where + ": missing string field 'name'");
    }
    LayerGeom geom;
    geom.name = entry["name"].get<std::string>();
    const std::string kind = entry.value("kind", std::string{});
    if (kind == "conv") {
      geom.kind = LayerKind::conv;
    } else if (kind == "pool") {
      geom.kind = LayerKind::pool;
    } else if (kind == "elementwise") {
      geom.kind = LayerKind::elementwise;
    } else {
      throw Error(ErrorCode::ParseError, where + ": field 'kind' must be conv, pool or elementwise");
    }
    geom.kernel = read_pair(entry, "kernel", where, false);
    geom.stride = read_pair(entry, "stride", where, false);
    geom.padding = read_pair(entry, "padding", where, true);
    arch.layers.push_back(std::move(geom));
  }
  validate_arch(arch);
  return arch;
}

std::string arch_to_json(const ArchSpec& arch) {
  json doc;
  doc["input_size"] = {arch.input_size.h, arch.input_size.w};
  doc["layers"] = json::array();
  for (const auto& l : arch.layers) {
    json e;
    e["name"] = l.name;
    e["kind"] = to_string(l.kind);
    e["kernel"] = {l.kernel.h, l.kernel.w};
    e["stride"] = {l.stride.h, l.stride.w};
    e["padding"] = {l.padding.h, l.padding.w};
    doc["layers"].push_back(std::move(e));
  }
  return doc.dump(2) + "\n";
}

RfGeometry prefix_geometry(const ArchSpec& arch, std::size_t layer_count) {
  RfGeometry g;
  for (std::size_t n = 0; n < layer_count && n < arch.layers.size(); ++n) {
    const auto& l = arch.layers[n];
    g.rf_h += (l.kernel.h - 1) * g.jump_h;
    g.rf_w += (l.kernel.w - 1) * g.jump_w;
    g.start_h += ((l.kernel.h - 1) / 2.0 - l.padding.h) * g.jump_h;
    g.start_w += ((l.kernel.w - 1) / 2.0 - l.padding.w) * g.jump_w;
    g.jump_h *= l.stride.h;
    g.jump_w *= l.stride.w;
  }
  return g;
}

RfGeometry layer_geometry(const ArchSpec& arch, std::string_view layer) {
  return prefix_geometry(arch, find_layer(arch, layer) + 1);
}

Pair layer_extent(const ArchSpec& arch, std::string_view layer) {
  const std::size_t last = find_layer(arch, layer);
  Pair size = arch.input_size;
  for (std::size_t n = 0; n <= last; ++n) {
    const auto& l = arch.layers[n];
    size.h = (size.h + 2 * l.padding.h - l.kernel.h) / l.stride.h + 1;
    size.w = (size.w + 2 * l.padding.w - l.kernel.w) / l.stride.w + 1;
    if (size.h < 1 || size.w < 1) {
      throw Error(ErrorCode::NonPositiveField, "layer '" + l.name + "' has empty output");
    }
  }
  return size;
}

PixelRect project_location(const ArchSpec& arch, std::string_view layer, int i, int j) {
  const RfGeometry g = layer_geometry(arch, layer);
  const Pair extent = layer_extent(arch, layer);
  if (i < 0 || j < 0 || i >= extent.h || j >= extent.w) {
    throw Error(ErrorCode::LocationOutOfRange,
                "(" + std::to_string(i) + "," + std::to_string(j) + ") outside " +
                    std::to_string(extent.h) + "x" + std::to_string(extent.w));
  }
  auto span = [](double start, double jump, double rf, int index, int limit) {
    const double center = start + index * jump;
    const double half = (rf - 1.0) / 2.0;
    int lo = static_cast<int>(std::floor(center - half));
    int hi = static_cast<int>(std::ceil(center + half));
    lo = std::clamp(lo, 0, limit - 1);
    hi = std::clamp(hi, 0, limit - 1);
    return std::pair{lo, hi};
  };
  const auto [r0, r1] = span(g.start_h, g.jump_h, g.rf_h, i, arch.input_size.h);
  const auto [c0, c1] = span(g.start_w, g.jump_w, g.rf_w, j, arch.input_size.w);
  return {r0, r1, c0, c1};
}

}  // namespace sacv
