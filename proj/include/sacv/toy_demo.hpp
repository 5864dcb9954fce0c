#pragma once

// End-to-end run of the concept-vector workflow on the toy network:
// guidance fixtures, probes at both layers, explanation maps, overlays,
// receptive-field listings and a summary table.

#include <filesystem>
#include <string>
#include <vector>

#include "sacv/concept_probe.hpp"
#include "sacv/explanation_maps.hpp"
#include "sacv/toy_model.hpp"

namespace sacv::toy {

struct DemoOptions {
  unsigned seed = 0;
  int guidance_size = 32;
  int test_size = 32;
  int striped_guidance = 20;
  int negatives_per_kind = 10;  // dotted, plain and noise guidance images each
  int test_images = 10;         // striped and plain test images each
  int composites = 3;
  ProbeConfig probe;            // seed is overwritten from `seed`
};

struct GuidanceImages {
  std::vector<SynthImage> striped;
  std::vector<SynthImage> dotted;
  std::vector<SynthImage> plain;
  std::vector<SynthImage> noise;
};

struct TestImages {
  std::vector<SynthImage> striped;
  std::vector<SynthImage> plain;
  std::vector<SynthImage> composites;
};

GuidanceImages make_guidance(const DemoOptions& opt);
TestImages make_test_images(const DemoOptions& opt);

std::vector<Tensor3> activations(const ToyNet& net, const std::vector<SynthImage>& images,
                                 std::string_view layer);

/// Striped-vs-{dotted, plain} probe at `layer`.
Sacv train_striped_probe(const ToyNet& net, const GuidanceImages& guidance, std::string_view layer,
                         const DemoOptions& opt);

/// Fraction of locations whose receptive field intersects the mask.
double fraction_projecting_into_mask(const std::vector<Location>& locations, const ArchSpec& arch,
                                     std::string_view layer, const SynthImage& img);

struct DemoSummary {
  double shallow_val_accuracy = 0.0;
  double deep_val_accuracy = 0.0;
  double min_striped_max_relevance = 0.0;
  double max_plain_max_relevance = 0.0;
  double ensemble_mean_val_accuracy = 0.0;
  double ensemble_min_cosine = 0.0;
  double composite_sensitivity_per_area = 0.0;
  double crop_sensitivity_per_area = 0.0;
  double top_decile_in_mask = 0.0;
  double tcav = 0.0;
  std::string text;
};

/// Writes the full fixture tree plus maps and a summary under `out_dir`,
/// which must not exist or be empty unless `force` is set.
DemoSummary run_toy_demo(const DemoOptions& opt, const std::filesystem::path& out_dir, bool force);

}  // namespace sacv::toy
