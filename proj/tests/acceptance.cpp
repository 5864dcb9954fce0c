// Acceptance checks P1..P8. Prints one PASS/FAIL line per property and exits
// non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "sacv/concept_probe.hpp"
#include "sacv/explanation_maps.hpp"
#include "sacv/toy_demo.hpp"
#include "support/finite_difference.hpp"
#include "support/helpers.hpp"
#include "support/newton_oracle.hpp"
#include "support/rf_oracle.hpp"

using namespace sacv;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

ProbeDataset gaussian_blobs(unsigned seed, std::size_t dim, std::size_t per_side, double separation) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ProbeDataset ds;
  ds.dim = dim;
  ds.layer = "blobs";
  for (int label = 1; label >= 0; --label)
    for (std::size_t r = 0; r < per_side; ++r) {
      for (std::size_t c = 0; c < dim; ++c) ds.vectors.push_back((c == 0 ? (label ? separation : -separation) : 0.0) + normal(rng));
      ds.labels.push_back(std::uint8_t(label));
      ds.groups.push_back((label ? "pos" : "neg") + std::to_string(r / 20));
    }
  return ds;
}

double dot_score(const std::vector<double>& v, double b, std::span<const double> row) {
  double z = b;
  for (std::size_t k = 0; k < v.size(); ++k) z += v[k] * row[k];
  return z;
}

Outcome p1() {
  struct Case {
    unsigned seed;
    std::size_t dim, per_side;
    double sep;
  };
  const Case cases[] = {{11, 4, 200, 1.0}, {12, 8, 400, 1.5}, {13, 16, 300, 0.5}};
  double worst_gap = 0, seconds = 0;
  std::size_t disagreements = 0;
  for (const auto& c : cases) {
    const ProbeDataset ds = gaussian_blobs(c.seed, c.dim, c.per_side, c.sep);
    ProbeConfig cfg;
    const auto t0 = std::chrono::steady_clock::now();
    const Sacv s = train_probe(ds, cfg);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto oracle = testing::solve_like_train_probe(ds, cfg);
    worst_gap = std::max(worst_gap, std::abs(s.stats.final_loss - oracle.solution.loss));
    const std::vector<double> ov(oracle.solution.v.data(), oracle.solution.v.data() + c.dim);
    for (std::size_t r : oracle.split.validation) {
      const auto row = oracle.standardized.row(r);
      disagreements += (dot_score(s.v, s.bias, row) > 0) != (dot_score(ov, oracle.solution.bias, row) > 0);
    }
  }
  return {worst_gap <= 1e-6 && disagreements == 0 && seconds < 10.0,
          "max |loss - newton| " + fmt("%.3g", worst_gap) + ", held-out disagreements " + std::to_string(disagreements) +
              ", train time " + fmt("%.2f", seconds) + " s"};
}

Outcome p2() {
  const toy::ToyNet net = toy::build_toy_net(0);
  double worst = 0;
  std::size_t checked = 0, skipped = 0;
  for (unsigned seed = 0; seed < 5; ++seed) {
    const auto img = toy::synth_texture(toy::TextureKind::noise, 32, 32, 4, 0, 5000 + seed);
    for (auto layer : {toy::kShallowLayer, toy::kDeepLayer})
      for (int cls = 0; cls < toy::kClasses; ++cls) {
        const auto r = testing::finite_difference_check(net, img, layer, cls, 1e-5);
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
      }
  }
  return {worst <= 1e-6 && checked > 0, "max relative error " + fmt("%.3g", worst) + " over " + std::to_string(checked) +
                                            " entries (" + std::to_string(skipped) + " routing-changing skipped)"};
}

Outcome p3() {
  const toy::ToyNet net = toy::build_toy_net(0);
  const ArchSpec arch = toy::export_toy_arch(net);
  std::size_t total = 0, mismatches = 0;
  for (auto layer : {toy::kShallowLayer, toy::kDeepLayer}) {
    const Pair extent = layer_extent(arch, layer);
    for (int i = 0; i < extent.h; ++i)
      for (int j = 0; j < extent.w; ++j) {
        ++total;
        mismatches += !(project_location(arch, layer, i, j) == testing::gradient_support_box(arch, layer, i, j));
      }
  }
  // The real network's input gradients never reach outside the rectangle.
  const auto img = toy::synth_texture(toy::TextureKind::noise, 32, 32, 4, 0, 77);
  std::size_t escapes = 0;
  for (auto layer : {toy::kShallowLayer, toy::kDeepLayer})
    for (int i = 0; i < 16; i += 5)
      for (int j = 0; j < 16; j += 3) {
        const Pair extent = layer_extent(arch, layer);
        if (i >= extent.h || j >= extent.w) continue;
        const PixelRect rect = project_location(arch, layer, i, j);
        const toy::Volume g = toy::input_gradient_of_unit(net, img, layer, 0, i, j);
        for (int r = 0; r < g.height; ++r)
          for (int c = 0; c < g.width; ++c)
            if (g.at(0, r, c) != 0.0 && (r < rect.row0 || r > rect.row1 || c < rect.col0 || c > rect.col1)) ++escapes;
      }
  return {mismatches == 0 && escapes == 0, std::to_string(total - mismatches) + "/" + std::to_string(total) +
                                               " locations match the gradient-support box, " + std::to_string(escapes) +
                                               " real-gradient escapes"};
}

Outcome p7() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0, 1);
  double worst_sum = 0, worst_lin = 0;
  bool scale_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor3 a = testing::random_tensor(rng, {6, 5, 7}, testing::activation_meta("l", "x"));
    const Tensor3 g = testing::random_tensor(rng, {6, 5, 7}, testing::gradient_meta("l", "x", 0));
    Sacv sv, sw;
    sv.layer = sw.layer = "l";
    for (int k = 0; k < 6; ++k) sv.v.push_back(n(rng)), sw.v.push_back(n(rng));
    const auto c = contribution_map(g, sv);
    double total = 0;
    for (double x : c.values) total += x;
    worst_sum = std::max(worst_sum, std::abs(total - layer_sensitivity(g, sv)) / std::max(1.0, std::abs(total)));

    Sacv mix = sv;
    for (int k = 0; k < 6; ++k) mix.v[k] = 0.8 * sv.v[k] - 1.3 * sw.v[k];
    RelevanceOptions nb;
    nb.with_bias = false;
    const auto rv = relevance_map(a, sv, nb), rw = relevance_map(a, sw, nb), rm = relevance_map(a, mix, nb);
    const auto cw = contribution_map(g, sw), cm = contribution_map(g, mix);
    for (std::size_t k = 0; k < rm.values.size(); ++k) {
      worst_lin = std::max(worst_lin, std::abs(rm.values[k] - (0.8 * rv.values[k] - 1.3 * rw.values[k])));
      worst_lin = std::max(worst_lin, std::abs(cm.values[k] - (0.8 * c.values[k] - 1.3 * cw.values[k])));
    }
    Sacv big = sv;
    for (auto& x : big.v) x *= 4.5;
    const auto rb = relevance_map(a, big, nb), cb = contribution_map(g, big);
    scale_ok = scale_ok && map_stats(rb).argmax == map_stats(rv).argmax && map_stats(cb).argmax == map_stats(c).argmax &&
               top_locations(rb, 1.0) == top_locations(rv, 1.0) && top_locations(cb, 1.0) == top_locations(c, 1.0);
  }
  std::size_t exact = 0;
  const fs::path dir = testing::scratch_dir("acceptance-roundtrip");
  for (int k = 0; k < 100; ++k) {
    std::uniform_int_distribution<int> dim(1, 9);
    const Shape3 shape{std::size_t(dim(rng)), std::size_t(dim(rng)), std::size_t(dim(rng))};
    const Tensor3 t = k % 2 ? testing::random_tensor(rng, shape, testing::gradient_meta("conv2_relu", "img" + std::to_string(k), k % 3))
                            : testing::random_tensor(rng, shape, testing::activation_meta("conv2_relu", "img" + std::to_string(k)));
    const fs::path p = dir / (std::to_string(k) + ".dump");
    write_dump(t, p);
    const Tensor3 back = read_dump(p);
    exact += back == t && std::memcmp(back.data.data(), t.data.data(), t.data.size() * sizeof(float)) == 0;
  }
  return {worst_sum <= 1e-9 && worst_lin <= 1e-9 && scale_ok && exact == 100,
          "sum identity err " + fmt("%.3g", worst_sum) + ", linearity err " + fmt("%.3g", worst_lin) +
              ", scale invariance " + (scale_ok ? "ok" : "broken") + ", bit-exact round trips " + std::to_string(exact) + "/100"};
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).generic_string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

}  // namespace

int main() {
  const fs::path scratch = testing::scratch_dir("acceptance-demo");
  toy::DemoSummary demo, again;
  std::map<std::string, std::string> first_tree, second_tree;
  const auto demo_once = [&](const char* name, toy::DemoSummary& s, std::map<std::string, std::string>& tree) {
    s = toy::run_toy_demo(toy::DemoOptions{}, scratch / name, false);
    tree = tree_contents(scratch / name);
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"P1 probe training matches the Newton optimum", p1},
      {"P2 layer gradients match finite differences", p2},
      {"P3 receptive fields equal gradient support", p3},
      {"P4 deep probe learns striped and separates striped from plain",
       [&] {
         demo_once("a", demo, first_tree);
         const bool ok = demo.deep_val_accuracy >= 0.95 && demo.min_striped_max_relevance > demo.max_plain_max_relevance;
         return Outcome{ok, "conv2_relu val " + fmt("%.4f", demo.deep_val_accuracy) + ", min striped max S_k " +
                                fmt("%.4f", demo.min_striped_max_relevance) + " vs max plain max S_k " +
                                fmt("%.4f", demo.max_plain_max_relevance)};
       }},
      {"P5 deep layer beats shallow layer by 0.05",
       [&] {
         const double gap = demo.deep_val_accuracy - demo.shallow_val_accuracy;
         return Outcome{gap >= 0.05, "conv1_relu val " + fmt("%.4f", demo.shallow_val_accuracy) + ", conv2_relu val " +
                                         fmt("%.4f", demo.deep_val_accuracy) + ", gap " + fmt("%.4f", gap)};
       }},
      {"P6 contributions localize into the mask; layer score dilutes",
       [&] {
         const double ratio = demo.composite_sensitivity_per_area / demo.crop_sensitivity_per_area;
         return Outcome{demo.top_decile_in_mask >= 0.9 && ratio < 1.0,
                        "top-decile in mask " + fmt("%.4f", demo.top_decile_in_mask) + ", dilution ratio " + fmt("%.4f", ratio)};
       }},
      {"P7 map identities and dump round trips", p7},
      {"P8 toy-demo output is byte-identical across runs",
       [&] {
         demo_once("b", again, second_tree);
         return Outcome{!first_tree.empty() && first_tree == second_tree,
                        std::to_string(first_tree.size()) + " files compared"};
       }},
  };

  int failures = 0;
  for (const auto& [name, check] : checks) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %s  (%s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu properties passed\n", int(checks.size()) - failures, checks.size());
  return failures == 0 ? 0 : 1;
}
