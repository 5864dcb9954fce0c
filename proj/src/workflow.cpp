#include "sacv/workflow.hpp"

#include <algorithm>
#include <cstdio>

#include "sacv/error.hpp"

namespace sacv {

namespace fs = std::filesystem;

std::vector<Tensor3> load_activation_dir(const fs::path& dir, std::string_view layer) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::ReadError, "not a directory: " + dir.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dump") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<Tensor3> out;
  std::string other_layer;
  for (const auto& f : files) {
    Tensor3 t = read_dump(f);
    if (t.meta.kind != TensorKind::activation) continue;
    if (t.meta.layer != layer) {
      if (other_layer.empty()) other_layer = t.meta.layer;
      continue;
    }
    out.push_back(std::move(t));
  }
  if (out.empty() && !other_layer.empty()) {
    throw Error(ErrorCode::LayerMismatch, dir.string() + " has dumps at '" + other_layer +
                                              "' but none at '" + std::string(layer) + "'");
  }
  return out;
}

nlohmann::json training_report(const Sacv& s) {
  nlohmann::json j;
  j["concept"] = s.concept_name;
  j["layer"] = s.layer;
  j["dim"] = s.v.size();
  j["seed"] = s.seed;
  j["train_accuracy"] = s.train_accuracy;
  j["val_accuracy"] = s.val_accuracy;
  j["learned"] = s.learned();
  j["final_loss"] = s.stats.final_loss;
  j["iterations"] = s.stats.iterations;
  j["converged"] = s.stats.converged;
  j["train_rows"] = s.stats.train_rows;
  j["validation_rows"] = s.stats.validation_rows;
  j["validation_groups"] = s.stats.validation_groups;
  j["standardized"] = s.channel_stats.has_value();
  return j;
}

nlohmann::json training_report(const EnsembleReport& report) {
  nlohmann::json j;
  j["members"] = nlohmann::json::array();
  for (const auto& m : report.members) j["members"].push_back(training_report(m));
  j["mean_val_accuracy"] = report.mean_val_accuracy;
  j["std_val_accuracy"] = report.std_val_accuracy;
  j["cosine"] = report.cosine;
  j["min_cosine"] = report.min_cosine;
  return j;
}

void write_text_file(const fs::path& destination, std::string_view text) {
  if (destination.has_parent_path()) fs::create_directories(destination.parent_path());
  write_bytes_atomic(destination, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {

void write_binary(const fs::path& destination, const std::vector<std::uint8_t>& bytes) {
  if (destination.has_parent_path()) fs::create_directories(destination.parent_path());
  write_bytes_atomic(destination, bytes);
}

fs::path with_suffix(const std::string& prefix, std::string_view suffix) {
  return fs::path(prefix + std::string(suffix));
}

}  // namespace

std::vector<std::uint8_t> render_map_png(const ExplanationMap& m, const RenderConfig& cfg,
                                         const std::optional<Tensor3>& image) {
  cfg.validate();
  const Grid heat = normalize_map(m, cfg);
  if (!image) return heatmap_png(heat, cfg);

  if (image->shape.channels != 1) {
    throw Error(ErrorCode::ShapeMismatch, "overlay image must have one channel, got " +
                                              std::to_string(image->shape.channels));
  }
  const int h = static_cast<int>(image->shape.height);
  const int w = static_cast<int>(image->shape.width);
  Grid gray(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) gray.at(i, j) = std::clamp<double>(image->at(0, i, j), 0.0, 1.0);
  return overlay(gray, upsample_map(heat, h, w, cfg.upsample), cfg);
}

ExplainResult run_explain(const ExplainRequest& req) {
  ExplainResult result;
  result.relevance = relevance_map(req.activation, req.sacv, req.relevance);
  if (req.gradient) {
    validate_pair(req.activation, *req.gradient);
    result.contribution = contribution_map(*req.gradient, req.sacv);
    result.sensitivity = layer_sensitivity(*req.gradient, req.sacv);
  }

  // Render everything before writing anything so a bad flag leaves no
  // partial output behind.
  const auto relevance_png = render_map_png(result.relevance, req.relevance_render, req.image);
  std::vector<std::uint8_t> contribution_png;
  std::string rf_table;
  if (result.contribution) {
    contribution_png = render_map_png(*result.contribution, req.contribution_render, req.image);
    if (req.arch) rf_table = rf_report(*result.contribution, *req.arch, req.activation.meta.layer, req.top_fraction);
  }

  auto emit_text = [&](std::string_view suffix, std::string_view text) {
    auto p = with_suffix(req.out_prefix, suffix);
    write_text_file(p, text);
    result.written.push_back(p);
  };
  auto emit_bytes = [&](std::string_view suffix, const std::vector<std::uint8_t>& bytes) {
    auto p = with_suffix(req.out_prefix, suffix);
    write_binary(p, bytes);
    result.written.push_back(p);
  };

  emit_text(".relevance.csv", map_to_csv(result.relevance));
  emit_bytes(".relevance.png", relevance_png);
  if (req.save_maps) emit_bytes(".relevance.dump", encode_record(map_to_record(result.relevance)));
  if (result.contribution) {
    emit_text(".contribution.csv", map_to_csv(*result.contribution));
    emit_bytes(".contribution.png", contribution_png);
    if (req.save_maps) emit_bytes(".contribution.dump", encode_record(map_to_record(*result.contribution)));
    if (req.arch) emit_text(".rf.txt", rf_table);
  }
  return result;
}

}  // namespace sacv
