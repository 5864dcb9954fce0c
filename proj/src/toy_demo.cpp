#include "sacv/toy_demo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "sacv/error.hpp"
#include "sacv/explanation_maps.hpp"
#include "sacv/receptive_field.hpp"
#include "sacv/workflow.hpp"

namespace sacv::toy {

namespace fs = std::filesystem;

namespace {

// Texture seeds are derived from the demo seed by fixed offsets so that one
// --seed reproduces every image.
constexpr unsigned kStripedGuidanceOffset = 100;
constexpr unsigned kDottedGuidanceOffset = 200;
constexpr unsigned kPlainGuidanceOffset = 300;
constexpr unsigned kNoiseGuidanceOffset = 400;
constexpr unsigned kStripedTestOffset = 500;
constexpr unsigned kPlainTestOffset = 600;
constexpr unsigned kCompositeOffset = 700;
constexpr unsigned kTcavOffset = 900;
constexpr int kTcavImages = 20;

constexpr std::array<int, 3> kPeriods = {4, 6, 8};

unsigned texture_seed(const DemoOptions& opt, unsigned offset, int k) {
  return opt.seed * 1000u + offset + static_cast<unsigned>(k);
}

int period_for(int k) { return kPeriods[static_cast<std::size_t>(k) % kPeriods.size()]; }

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

std::string mask_csv(const SynthImage& img) {
  std::string out;
  for (int i = 0; i < img.height; ++i) {
    for (int j = 0; j < img.width; ++j) {
      if (j) out += ',';
      out += img.masked(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

void ensure_usable_output_dir(const fs::path& out_dir, bool force) {
  std::error_code ec;
  if (!fs::exists(out_dir, ec)) {
    fs::create_directories(out_dir);
    return;
  }
  if (!fs::is_directory(out_dir, ec)) {
    throw Error(ErrorCode::OutputExists, out_dir.string() + " exists and is not a directory");
  }
  if (!force && !fs::is_empty(out_dir, ec)) {
    throw Error(ErrorCode::OutputExists,
                out_dir.string() + " is not empty; refusing to write into it without --force");
  }
}

void dump_layers(const ToyNet& net, const SynthImage& img, const fs::path& dir) {
  fs::create_directories(dir);
  for (auto layer : {kShallowLayer, kDeepLayer}) {
    write_dump(forward_to_layer(net, img, layer), dir / (img.id + "." + std::string(layer) + ".dump"));
  }
}

}  // namespace

GuidanceImages make_guidance(const DemoOptions& opt) {
  const int g = opt.guidance_size;
  GuidanceImages out;
  for (int k = 0; k < opt.striped_guidance; ++k) {
    out.striped.push_back(
        synth_texture(TextureKind::striped, g, g, period_for(k), k, texture_seed(opt, kStripedGuidanceOffset, k)));
  }
  for (int k = 0; k < opt.negatives_per_kind; ++k) {
    out.dotted.push_back(synth_texture(TextureKind::dotted, g, g, period_for(k) + 2, k,
                                       texture_seed(opt, kDottedGuidanceOffset, k)));
    out.plain.push_back(synth_texture(TextureKind::plain, g, g, 2, 0, texture_seed(opt, kPlainGuidanceOffset, k)));
    out.noise.push_back(synth_texture(TextureKind::noise, g, g, 2, 0, texture_seed(opt, kNoiseGuidanceOffset, k)));
  }
  return out;
}

TestImages make_test_images(const DemoOptions& opt) {
  const int t = opt.test_size;
  TestImages out;
  for (int k = 0; k < opt.test_images; ++k) {
    out.striped.push_back(
        synth_texture(TextureKind::striped, t, t, period_for(k), k + 3, texture_seed(opt, kStripedTestOffset, k)));
    out.plain.push_back(synth_texture(TextureKind::plain, t, t, 2, 0, texture_seed(opt, kPlainTestOffset, k)));
  }
  for (int k = 0; k < opt.composites; ++k) {
    out.composites.push_back(
        synth_texture(TextureKind::composite, t, t, period_for(k), 0, texture_seed(opt, kCompositeOffset, k)));
  }
  return out;
}

std::vector<Tensor3> activations(const ToyNet& net, const std::vector<SynthImage>& images,
                                 std::string_view layer) {
  std::vector<Tensor3> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(forward_to_layer(net, img, layer));
  return out;
}

Sacv train_striped_probe(const ToyNet& net, const GuidanceImages& guidance, std::string_view layer,
                         const DemoOptions& opt) {
  auto pos = activations(net, guidance.striped, layer);
  auto neg = activations(net, guidance.dotted, layer);
  auto plain = activations(net, guidance.plain, layer);
  neg.insert(neg.end(), plain.begin(), plain.end());
  ProbeConfig cfg = opt.probe;
  cfg.seed = opt.seed;
  return train_probe(build_dataset(pos, neg), cfg, "striped");
}

double fraction_projecting_into_mask(const std::vector<Location>& locations, const ArchSpec& arch,
                                     std::string_view layer, const SynthImage& img) {
  if (locations.empty()) return 0.0;
  std::size_t inside = 0;
  for (const auto& loc : locations) {
    const PixelRect r = project_location(arch, layer, loc.i, loc.j);
    bool hit = false;
    for (int y = r.row0; y <= r.row1 && !hit; ++y)
      for (int x = r.col0; x <= r.col1 && !hit; ++x) hit = img.masked(y, x);
    if (hit) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(locations.size());
}

DemoSummary run_toy_demo(const DemoOptions& opt, const fs::path& out_dir, bool force) {
  ensure_usable_output_dir(out_dir, force);

  const ToyNet net = build_toy_net(opt.seed);
  const ArchSpec arch = export_toy_arch(net);
  const GuidanceImages guidance = make_guidance(opt);
  const TestImages tests = make_test_images(opt);

  write_text_file(out_dir / "arch.json", arch_to_json(arch));

  // Fixture tree: guidance dumps at both layers, test images, masks.
  for (const auto& img : guidance.striped) dump_layers(net, img, out_dir / "guidance" / "striped");
  for (const auto& img : guidance.dotted) dump_layers(net, img, out_dir / "guidance" / "dotted");
  for (const auto& img : guidance.plain) dump_layers(net, img, out_dir / "guidance" / "plain");
  for (const auto& img : guidance.noise) dump_layers(net, img, out_dir / "guidance" / "noise");

  std::vector<const SynthImage*> all_tests;
  for (const auto& img : tests.striped) all_tests.push_back(&img);
  for (const auto& img : tests.plain) all_tests.push_back(&img);
  for (const auto& img : tests.composites) all_tests.push_back(&img);

  const fs::path images_dir = out_dir / "images";
  fs::create_directories(images_dir);
  for (const SynthImage* img : all_tests) {
    write_dump(image_tensor(*img), images_dir / (img->id + ".input.dump"));
    for (auto layer : {kShallowLayer, kDeepLayer}) {
      const std::string stem = img->id + "." + std::string(layer);
      write_dump(forward_to_layer(net, *img, layer), images_dir / (stem + ".activation.dump"));
      write_dump(grad_at_layer(net, *img, layer, kStripedObject), images_dir / (stem + ".gradient.dump"));
    }
    write_text_file(out_dir / "masks" / (img->id + ".csv"), mask_csv(*img));
  }

  // Probes at both layers, plus a two-member ensemble at the deep layer.
  const fs::path probes_dir = out_dir / "probes";
  std::array<Sacv, 2> probes = {train_striped_probe(net, guidance, kShallowLayer, opt),
                                train_striped_probe(net, guidance, kDeepLayer, opt)};
  for (const auto& p : probes) {
    write_sacv(p, probes_dir / ("striped_" + p.layer + ".dump"));
    write_text_file(probes_dir / ("striped_" + p.layer + ".report.json"), training_report(p).dump(2) + "\n");
  }
  const Sacv& deep = probes[1];

  ProbeConfig ensemble_cfg = opt.probe;
  ensemble_cfg.seed = opt.seed;
  const auto striped_deep = activations(net, guidance.striped, kDeepLayer);
  const auto dotted_deep = activations(net, guidance.dotted, kDeepLayer);
  const auto plain_deep = activations(net, guidance.plain, kDeepLayer);
  const auto noise_deep = activations(net, guidance.noise, kDeepLayer);
  std::vector<std::vector<Tensor3>> pool(2);
  pool[0] = dotted_deep;
  pool[0].insert(pool[0].end(), plain_deep.begin(), plain_deep.end());
  pool[1] = dotted_deep;
  pool[1].insert(pool[1].end(), noise_deep.begin(), noise_deep.end());
  const EnsembleReport ensemble = train_ensemble(striped_deep, pool, ensemble_cfg, "striped");
  for (std::size_t m = 0; m < ensemble.members.size(); ++m) {
    write_sacv(ensemble.members[m],
               probes_dir / ("striped_" + std::string(kDeepLayer) + "_ensemble.m" + std::to_string(m) + ".dump"));
  }
  write_text_file(probes_dir / ("striped_" + std::string(kDeepLayer) + "_ensemble.report.json"),
                  training_report(ensemble).dump(2) + "\n");

  // Explanation maps for every test image at the deep layer.
  DemoSummary summary;
  summary.shallow_val_accuracy = probes[0].val_accuracy;
  summary.deep_val_accuracy = deep.val_accuracy;
  summary.ensemble_mean_val_accuracy = ensemble.mean_val_accuracy;
  summary.ensemble_min_cosine = ensemble.min_cosine;
  summary.min_striped_max_relevance = HUGE_VAL;
  summary.max_plain_max_relevance = -HUGE_VAL;

  std::string image_table = "image                          kind       max_S_k      mean_S_k\n";
  for (const SynthImage* img : all_tests) {
    ExplainRequest req;
    req.sacv = deep;
    req.activation = forward_to_layer(net, *img, kDeepLayer);
    req.gradient = grad_at_layer(net, *img, kDeepLayer, kStripedObject);
    req.arch = arch;
    req.image = image_tensor(*img);
    req.out_prefix = (out_dir / "maps" / (img->id + "." + std::string(kDeepLayer))).string();
    const ExplainResult r = run_explain(req);
    const MapStats st = map_stats(r.relevance);
    if (img->kind == TextureKind::striped) summary.min_striped_max_relevance = std::min(summary.min_striped_max_relevance, st.max);
    if (img->kind == TextureKind::plain) summary.max_plain_max_relevance = std::max(summary.max_plain_max_relevance, st.max);
    char line[160];
    std::snprintf(line, sizeof line, "%-30s %-10s %12.6f %12.6f\n", img->id.c_str(), to_string(img->kind).c_str(),
                  st.max, st.mean);
    image_table += line;
  }

  // Background interference on the composites: where the top contributions
  // land, and how the whole-layer score dilutes against a tight crop.
  double min_in_mask = 1.0;
  double composite_per_area = 0.0;
  double crop_per_area = 0.0;
  std::string composite_table = "composite                      top_decile_in_mask  sens_per_area  crop_sens_per_area  ratio\n";
  for (const auto& img : tests.composites) {
    const auto cmap = contribution_map(grad_at_layer(net, img, kDeepLayer, kStripedObject), deep);
    const double in_mask = fraction_projecting_into_mask(top_locations(cmap, 0.1), arch, kDeepLayer, img);
    min_in_mask = std::min(min_in_mask, in_mask);

    const SynthImage tight = crop(img, 0, 0, img.height, img.width / 2);
    const double area = static_cast<double>(std::count(img.mask.begin(), img.mask.end(), std::uint8_t{1}));
    const double tight_area = static_cast<double>(std::count(tight.mask.begin(), tight.mask.end(), std::uint8_t{1}));
    const double s_comp = std::abs(layer_sensitivity(grad_at_layer(net, img, kDeepLayer, kStripedObject), deep)) / area;
    const double s_crop = std::abs(layer_sensitivity(grad_at_layer(net, tight, kDeepLayer, kStripedObject), deep)) / tight_area;
    composite_per_area += s_comp;
    crop_per_area += s_crop;
    char line[200];
    std::snprintf(line, sizeof line, "%-30s %18.6f %14.6f %19.6f %6.4f\n", img.id.c_str(), in_mask, s_comp, s_crop,
                  s_comp / s_crop);
    composite_table += line;
  }
  const double n_comp = static_cast<double>(std::max<std::size_t>(1, tests.composites.size()));
  summary.top_decile_in_mask = min_in_mask;
  summary.composite_sensitivity_per_area = composite_per_area / n_comp;
  summary.crop_sensitivity_per_area = crop_per_area / n_comp;

  std::vector<Tensor3> tcav_gradients;
  for (int k = 0; k < kTcavImages; ++k) {
    const auto img = synth_texture(TextureKind::striped, opt.test_size, opt.test_size, period_for(k), k,
                                   texture_seed(opt, kTcavOffset, k));
    tcav_gradients.push_back(grad_at_layer(net, img, kDeepLayer, kStripedObject));
  }
  summary.tcav = tcav_score(tcav_gradients, deep);

  std::string text;
  text += "toy demo seed " + std::to_string(opt.seed) + "\n\n";
  text += "layer accuracy (striped vs dotted+plain)\n";
  for (const auto& p : probes) {
    text += p.layer + " train_accuracy " + fmt("%.6f", p.train_accuracy) + "\n";
    text += p.layer + " val_accuracy " + fmt("%.6f", p.val_accuracy) +
            (p.learned() ? "" : "  (concept not learned at this layer)") + "\n";
  }
  text += "\nensemble at " + std::string(kDeepLayer) + ": mean val_accuracy " +
          fmt("%.6f", ensemble.mean_val_accuracy) + ", std " + fmt("%.6f", ensemble.std_val_accuracy) +
          ", min cosine " + fmt("%.6f", ensemble.min_cosine) + "\n";
  text += "\nmax{S_k} per test image at " + std::string(kDeepLayer) + "\n" + image_table;
  text += "min over striped of max{S_k} " + fmt("%.6f", summary.min_striped_max_relevance) + "\n";
  text += "max over plain of max{S_k} " + fmt("%.6f", summary.max_plain_max_relevance) + "\n";
  text += "\nbackground interference at " + std::string(kDeepLayer) + "\n" + composite_table;
  text += "dilution ratio " + fmt("%.6f", summary.composite_sensitivity_per_area / summary.crop_sensitivity_per_area) + "\n";
  text += "\ntcav_score over " + std::to_string(kTcavImages) + " striped images " + fmt("%.6f", summary.tcav) + "\n";
  summary.text = text;
  write_text_file(out_dir / "summary.txt", text);
  return summary;
}

}  // namespace sacv::toy
