#include "sacv/explanation_maps.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sacv/error.hpp"

namespace sacv {
namespace {

void check_compatible(const Tensor3& t, const Sacv& s) {
  if (t.shape.channels != s.v.size()) {
    throw Error(ErrorCode::DimensionMismatch, "tensor has " + std::to_string(t.shape.channels) +
                                                  " channels, concept vector " +
                                                  std::to_string(s.v.size()));
  }
  if (t.meta.layer != s.layer) {
    throw Error(ErrorCode::LayerMismatch,
                "tensor layer '" + t.meta.layer + "' vs concept vector layer '" + s.layer + "'");
  }
}

// Direction applied to gradients: v / sigma. Mean shifts and bias drop out of
// a directional derivative.
std::vector<double> gradient_direction(const Sacv& s) { return folded(s).weights; }

ExplanationMap project(const Tensor3& t, std::span<const double> w, double bias) {
  ExplanationMap m;
  m.height = static_cast<int>(t.shape.height);
  m.width = static_cast<int>(t.shape.width);
  m.values.assign(t.shape.height * t.shape.width, 0.0);
  for (std::size_t i = 0; i < t.shape.height; ++i) {
    for (std::size_t j = 0; j < t.shape.width; ++j) {
      double acc = bias;
      for (std::size_t c = 0; c < t.shape.channels; ++c) acc += double(t.at(c, i, j)) * w[c];
      m.values[i * t.shape.width + j] = acc;
    }
  }
  m.layer = t.meta.layer;
  m.image_id = t.meta.image_id;
  return m;
}

void check_gradient(const Tensor3& gradient, const Sacv& s) {
  if (gradient.meta.kind != TensorKind::gradient) {
    throw Error(ErrorCode::WrongKind, "contribution needs a gradient tensor");
  }
  if (!gradient.meta.class_index) throw Error(ErrorCode::MissingClass, "gradient without class_index");
  check_compatible(gradient, s);
}

}  // namespace

std::string to_string(MapKind kind) {
  return kind == MapKind::relevance ? "map_relevance" : "map_contribution";
}

ExplanationMap relevance_map(const Tensor3& activation, const Sacv& s, const RelevanceOptions& options) {
  if (activation.meta.kind != TensorKind::activation) {
    throw Error(ErrorCode::WrongKind, "relevance needs an activation tensor");
  }
  check_compatible(activation, s);
  const AffineProbe a = folded(s);
  ExplanationMap m = project(activation, a.weights, options.with_bias ? a.bias : 0.0);
  m.kind = MapKind::relevance;
  m.concept_name = s.concept_name;
  return m;
}

ExplanationMap contribution_map(const Tensor3& gradient, const Sacv& s) {
  check_gradient(gradient, s);
  ExplanationMap m = project(gradient, gradient_direction(s), 0.0);
  m.kind = MapKind::contribution;
  m.concept_name = s.concept_name;
  m.class_index = gradient.meta.class_index;
  return m;
}

double layer_sensitivity(const Tensor3& gradient, const Sacv& s) {
  const ExplanationMap m = contribution_map(gradient, s);
  return pairwise_sum(0, m.values.size(), [&](std::size_t k) { return m.values[k]; });
}

double tcav_score(std::span<const Tensor3> gradients, const Sacv& s) {
  if (gradients.empty()) throw Error(ErrorCode::EmptySet, "no gradients");
  const auto& first = gradients.front().meta;
  std::size_t positive = 0;
  for (const auto& g : gradients) {
    if (g.meta.class_index != first.class_index) {
      throw Error(ErrorCode::MixedClass, "gradients target different classes");
    }
    if (g.meta.layer != first.layer) {
      throw Error(ErrorCode::LayerMismatch, "gradients come from different layers");
    }
    if (layer_sensitivity(g, s) > 0.0) ++positive;
  }
  return double(positive) / double(gradients.size());
}

MapStats map_stats(const ExplanationMap& m) {
  MapStats st;
  if (m.values.empty()) return st;
  std::size_t arg_max = 0, arg_min = 0;
  for (std::size_t k = 1; k < m.values.size(); ++k) {
    if (m.values[k] > m.values[arg_max]) arg_max = k;
    if (m.values[k] < m.values[arg_min]) arg_min = k;
  }
  st.max = m.values[arg_max];
  st.min = m.values[arg_min];
  st.mean = pairwise_sum(0, m.values.size(), [&](std::size_t k) { return m.values[k]; }) /
            double(m.values.size());
  // Rounding can push the mean a hair outside [min, max] on constant maps.
  st.mean = std::clamp(st.mean, st.min, st.max);
  st.argmax = {int(arg_max / m.width), int(arg_max % m.width)};
  st.argmin = {int(arg_min / m.width), int(arg_min % m.width)};
  return st;
}

std::vector<Location> top_locations(const ExplanationMap& m, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::BadFraction, "fraction must lie in (0, 1]");
  }
  const std::size_t total = m.values.size();
  auto count = static_cast<std::size_t>(std::ceil(fraction * double(total) - 1e-9));
  count = std::clamp<std::size_t>(count, 1, total);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return m.values[a] > m.values[b]; });
  std::vector<Location> out;
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back({int(order[k] / m.width), int(order[k] % m.width)});
  }
  return out;
}

std::string map_to_csv(const ExplanationMap& m) {
  std::string out = "i,j,value\n";
  char buf[64];
  for (int i = 0; i < m.height; ++i) {
    for (int j = 0; j < m.width; ++j) {
      std::snprintf(buf, sizeof buf, "%d,%d,%.9g\n", i, j, m.at(i, j));
      out += buf;
    }
  }
  return out;
}

DumpRecord map_to_record(const ExplanationMap& m) {
  for (double x : m.values) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidTensor, "map has non-finite entries");
  }
  DumpRecord rec;
  rec.meta["layer"] = m.layer;
  rec.meta["kind"] = to_string(m.kind);
  rec.meta["image_id"] = m.image_id;
  rec.meta["class_index"] = m.class_index ? nlohmann::json(*m.class_index) : nlohmann::json(nullptr);
  rec.meta["source_model"] = "";
  rec.meta["concept"] = m.concept_name;
  rec.dtype = Dtype::float64;
  rec.dims = {std::uint64_t(m.height), std::uint64_t(m.width)};
  rec.f64 = m.values;
  return rec;
}

ExplanationMap map_from_record(const DumpRecord& rec) {
  ExplanationMap m;
  const std::string kind = rec.meta.value("kind", std::string{});
  if (kind == "map_relevance") {
    m.kind = MapKind::relevance;
  } else if (kind == "map_contribution") {
    m.kind = MapKind::contribution;
  } else {
    throw Error(ErrorCode::WrongKind, "container does not hold an explanation map");
  }
  if (rec.dims.size() != 2) throw Error(ErrorCode::BadMetadata, "map must have ndim 2");
  try {
    m.layer = rec.meta.at("layer").get<std::string>();
    m.image_id = rec.meta.at("image_id").get<std::string>();
    m.concept_name = rec.meta.value("concept", std::string{});
    const auto& ci = rec.meta.at("class_index");
    if (!ci.is_null()) m.class_index = ci.get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadMetadata, std::string("map metadata: ") + e.what());
  }
  m.height = static_cast<int>(rec.dims[0]);
  m.width = static_cast<int>(rec.dims[1]);
  m.values = rec.dtype == Dtype::float64 ? rec.f64 : std::vector<double>(rec.f32.begin(), rec.f32.end());
  return m;
}

void write_map(const ExplanationMap& m, const std::filesystem::path& destination) {
  write_record(map_to_record(m), destination);
}

ExplanationMap read_map(const std::filesystem::path& source) { return map_from_record(read_record(source)); }

}  // namespace sacv
