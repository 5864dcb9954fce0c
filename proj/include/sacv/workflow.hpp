#pragma once

// Glue shared by the command-line tool and the toy demo: loading dump
// directories, JSON training reports, and the explain step that turns one
// (probe, activation[, gradient]) triple into files.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sacv/concept_probe.hpp"
#include "sacv/explanation_maps.hpp"
#include "sacv/receptive_field.hpp"
#include "sacv/render.hpp"

namespace sacv {

/// All activation dumps in `dir` (non-recursive, *.dump, sorted by file name)
/// whose meta.layer equals `layer`. Dumps at other layers are skipped; if the
/// directory holds dumps but none at `layer`, throws LayerMismatch.
std::vector<Tensor3> load_activation_dir(const std::filesystem::path& dir, std::string_view layer);

nlohmann::json training_report(const Sacv& s);
nlohmann::json training_report(const EnsembleReport& report);

/// Writes `text` as a file, creating parent directories.
void write_text_file(const std::filesystem::path& destination, std::string_view text);

struct ExplainRequest {
  Sacv sacv;
  Tensor3 activation;
  std::optional<Tensor3> gradient;
  std::optional<ArchSpec> arch;
  /// 1 x H0 x W0 input image; when present the PNGs are overlays at input
  /// resolution, otherwise plain heatmaps at map resolution.
  std::optional<Tensor3> image;
  std::string out_prefix;
  RenderConfig relevance_render = RenderConfig::defaults_for(MapKind::relevance);
  RenderConfig contribution_render = RenderConfig::defaults_for(MapKind::contribution);
  RelevanceOptions relevance;
  double top_fraction = 0.1;
  bool save_maps = false;
};

struct ExplainResult {
  std::vector<std::filesystem::path> written;
  ExplanationMap relevance;
  std::optional<ExplanationMap> contribution;
  std::optional<double> sensitivity;
};

ExplainResult run_explain(const ExplainRequest& request);

/// PNG bytes for one map under `cfg`, overlaid on `image` when given.
std::vector<std::uint8_t> render_map_png(const ExplanationMap& m, const RenderConfig& cfg,
                                         const std::optional<Tensor3>& image);

}  // namespace sacv
