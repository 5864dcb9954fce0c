#include "sacv/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sacv/error.hpp"
#include "sacv/receptive_field.hpp"
#include "sacv/render.hpp"
#include "sacv/toy_demo.hpp"
#include "sacv/workflow.hpp"

namespace sacv {

namespace fs = std::filesystem;

namespace {

struct ProbeFlags {
  double l2_lambda = ProbeConfig{}.l2_lambda;
  double learning_rate = ProbeConfig{}.learning_rate;
  int max_iters = ProbeConfig{}.max_iters;
  double tol = ProbeConfig{}.tol;
  double val_fraction = ProbeConfig{}.val_fraction;
  bool no_standardize = false;

  ProbeConfig to_config(unsigned seed) const {
    ProbeConfig cfg;
    cfg.l2_lambda = l2_lambda;
    cfg.learning_rate = learning_rate;
    cfg.max_iters = max_iters;
    cfg.tol = tol;
    cfg.val_fraction = val_fraction;
    cfg.seed = seed;
    cfg.standardize = !no_standardize;
    return cfg;
  }
};

void add_probe_flags(CLI::App* cmd, ProbeFlags& f) {
  cmd->add_option("--l2-lambda", f.l2_lambda, "L2 penalty on the concept vector")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--learning-rate", f.learning_rate, "initial gradient-descent step")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-iters", f.max_iters, "iteration cap")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--tol", f.tol, "stop when the loss decrease falls below this")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--val-fraction", f.val_fraction, "fraction of images held out per class")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.99));
  cmd->add_flag("--no-standardize", f.no_standardize, "train on raw activations");
}

struct RenderFlags {
  std::string relevance_normalization = "minmax";
  std::string contribution_normalization = "symmetric";
  double fixed_lo = 0.0;
  double fixed_hi = 1.0;
  std::string upsample = "nearest";
  double alpha = 0.6;
  std::string colormap = "diverging";

  RenderConfig to_config(const std::string& normalization) const {
    RenderConfig cfg;
    cfg.normalization = normalization_from_string(normalization);
    cfg.fixed_lo = fixed_lo;
    cfg.fixed_hi = fixed_hi;
    cfg.upsample = upsample_from_string(upsample);
    cfg.alpha = alpha;
    cfg.colormap = colormap_from_string(colormap);
    cfg.validate();
    return cfg;
  }
};

void add_render_flags(CLI::App* cmd, RenderFlags& f) {
  const auto norms = CLI::IsMember({"minmax", "symmetric", "fixed"});
  cmd->add_option("--relevance-normalization", f.relevance_normalization)->capture_default_str()->check(norms);
  cmd->add_option("--contribution-normalization", f.contribution_normalization)
      ->capture_default_str()
      ->check(norms);
  cmd->add_option("--fixed-lo", f.fixed_lo, "lower bound for fixed normalization")->capture_default_str();
  cmd->add_option("--fixed-hi", f.fixed_hi, "upper bound for fixed normalization")->capture_default_str();
  cmd->add_option("--upsample", f.upsample)->capture_default_str()->check(CLI::IsMember({"nearest", "bilinear"}));
  cmd->add_option("--alpha", f.alpha, "heat opacity over the image")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--colormap", f.colormap)->capture_default_str()->check(CLI::IsMember({"diverging", "sequential"}));
}

std::string strip_dump_extension(std::string prefix) {
  const std::string ext = ".dump";
  if (prefix.size() > ext.size() && prefix.compare(prefix.size() - ext.size(), ext.size(), ext) == 0) {
    prefix.resize(prefix.size() - ext.size());
  }
  return prefix;
}

std::string format_accuracy(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatial activation concept vectors: train concept probes and explain images location by location",
               "sacv"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML-style config file; flags override it");

  unsigned seed = 0;
  app.add_option("--seed", seed, "single source of randomness; module seeds derive from it")->capture_default_str();

  // toy-demo
  auto* demo = app.add_subcommand("toy-demo", "generate fixtures, train probes, and write maps on the toy network");
  std::string demo_out;
  bool demo_force = false;
  demo->add_option("out_dir", demo_out, "output directory (must be empty or absent)")->required();
  demo->add_flag("--force", demo_force, "write into a non-empty directory");

  // probe-train
  auto* train = app.add_subcommand("probe-train", "train a concept vector from guidance activation dumps");
  std::string concept_name, positives_dir, layer, train_out;
  std::vector<std::string> negatives_dirs;
  bool drop_border = false;
  ProbeFlags probe_flags;
  train->add_option("--concept", concept_name, "concept name")->required();
  train->add_option("--positives", positives_dir, "directory of concept activation dumps")->required();
  train->add_option("--negatives", negatives_dirs, "random-set directory; repeat for an ensemble")->required();
  train->add_option("--layer", layer, "layer name as stored in the dumps")->required();
  train->add_option("--out", train_out, "output prefix for <prefix>.dump and <prefix>.report.json")->required();
  train->add_flag("--drop-border", drop_border, "skip the outermost ring of locations");
  add_probe_flags(train, probe_flags);

  // explain
  auto* explain = app.add_subcommand("explain", "relevance and contribution maps for one image");
  std::string sacv_path, activation_path, gradient_path, arch_path, image_path, out_prefix;
  double top_fraction = 0.1;
  bool no_bias = false;
  bool save_maps = false;
  RenderFlags render_flags;
  explain->add_option("--sacv", sacv_path, "trained concept vector")->required();
  explain->add_option("--activation", activation_path, "activation dump of the image")->required();
  explain->add_option("--gradient", gradient_path, "class-logit gradient dump of the image");
  explain->add_option("--arch", arch_path, "arch JSON; with --gradient adds a receptive-field table");
  explain->add_option("--image", image_path, "1 x H x W input dump; PNGs become overlays");
  explain->add_option("--out-prefix", out_prefix, "prefix for all written files")->required();
  explain->add_option("--top-fraction", top_fraction, "share of locations listed in the rf table")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  explain->add_flag("--no-bias", no_bias, "relevance without the probe bias");
  explain->add_flag("--save-maps", save_maps, "also persist both maps as dumps");
  add_render_flags(explain, render_flags);

  // rf
  auto* rf = app.add_subcommand("rf", "input rectangle of one location");
  std::string rf_arch, rf_layer, rf_loc;
  rf->add_option("--arch", rf_arch, "arch JSON")->required();
  rf->add_option("--layer", rf_layer, "layer name")->required();
  rf->add_option("--loc", rf_loc, "location as i,j")
      ->required()
      ->check(CLI::Validator(
          [](std::string& s) {
            return std::regex_match(s, std::regex(R"(\d+,\d+)")) ? std::string() : "expected i,j";
          },
          "I,J"));

  // report
  auto* report = app.add_subcommand("report", "tabulate probes across layers, optionally with max{S_k} per image");
  std::vector<std::string> report_probes, report_activations;
  report->add_option("--probe", report_probes, "trained concept vector (repeatable)")->required();
  report->add_option("--activation", report_activations, "activation dump (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  // Only the selected subcommand's options are echoed; the others never run.
  err << "# resolved configuration\nseed=" << seed << "\n";
  for (const CLI::App* sub : app.get_subcommands()) {
    err << "[" << sub->get_name() << "]\n" << sub->config_to_str(true, false);
  }

  try {
    if (demo->parsed()) {
      toy::DemoOptions opt;
      opt.seed = seed;
      const auto summary = toy::run_toy_demo(opt, demo_out, demo_force);
      out << summary.text;
      return kExitOk;
    }

    if (train->parsed()) {
      const ProbeConfig cfg = probe_flags.to_config(seed);
      const auto positives = load_activation_dir(positives_dir, layer);
      const std::string prefix = strip_dump_extension(train_out);
      BuildOptions build;
      build.drop_border = drop_border;
      if (negatives_dirs.size() == 1) {
        const auto negatives = load_activation_dir(negatives_dirs.front(), layer);
        const Sacv s = train_probe(build_dataset(positives, negatives, build), cfg, concept_name);
        write_sacv(s, prefix + ".dump");
        write_text_file(prefix + ".report.json", training_report(s).dump(2) + "\n");
        out << layer << " val_accuracy " << format_accuracy(s.val_accuracy)
            << (s.learned() ? "" : "  (concept not learned at this layer)") << "\n";
      } else {
        std::vector<std::vector<Tensor3>> pool;
        for (const auto& d : negatives_dirs) pool.push_back(load_activation_dir(d, layer));
        EnsembleOptions options;
        options.build = build;
        const EnsembleReport r = train_ensemble(positives, pool, cfg, concept_name, options);
        for (std::size_t m = 0; m < r.members.size(); ++m) {
          write_sacv(r.members[m], prefix + ".m" + std::to_string(m) + ".dump");
        }
        write_text_file(prefix + ".report.json", training_report(r).dump(2) + "\n");
        out << layer << " mean val_accuracy " << format_accuracy(r.mean_val_accuracy) << " min cosine "
            << format_accuracy(r.min_cosine) << "\n";
      }
      return kExitOk;
    }

    if (explain->parsed()) {
      ExplainRequest req;
      req.sacv = read_sacv(sacv_path);
      req.activation = read_dump(activation_path);
      if (!gradient_path.empty()) req.gradient = read_dump(gradient_path);
      if (!arch_path.empty()) {
        const auto bytes = read_bytes(arch_path);
        req.arch = parse_arch(std::string(bytes.begin(), bytes.end()));
      }
      if (!image_path.empty()) req.image = read_dump(image_path);
      req.out_prefix = out_prefix;
      req.relevance_render = render_flags.to_config(render_flags.relevance_normalization);
      req.contribution_render = render_flags.to_config(render_flags.contribution_normalization);
      req.relevance.with_bias = !no_bias;
      req.top_fraction = top_fraction;
      req.save_maps = save_maps;
      const ExplainResult r = run_explain(req);
      const MapStats st = map_stats(r.relevance);
      char line[128];
      std::snprintf(line, sizeof line, "max_S_k %.9g at %d,%d\n", st.max, st.argmax.i, st.argmax.j);
      out << line;
      if (r.sensitivity) {
        std::snprintf(line, sizeof line, "layer_sensitivity %.9g\n", *r.sensitivity);
        out << line;
      }
      for (const auto& p : r.written) out << "wrote " << p.string() << "\n";
      return kExitOk;
    }

    if (rf->parsed()) {
      const auto bytes = read_bytes(rf_arch);
      const ArchSpec arch = parse_arch(std::string(bytes.begin(), bytes.end()));
      const auto comma = rf_loc.find(',');
      const int i = std::stoi(rf_loc.substr(0, comma));
      const int j = std::stoi(rf_loc.substr(comma + 1));
      const PixelRect r = project_location(arch, rf_layer, i, j);
      out << "rows " << r.row0 << ".." << r.row1 << " cols " << r.col0 << ".." << r.col1 << "\n";
      return kExitOk;
    }

    if (report->parsed()) {
      std::vector<Sacv> probes;
      for (const auto& p : report_probes) probes.push_back(read_sacv(p));
      char line[256];
      std::snprintf(line, sizeof line, "%-16s %-16s %10s %10s  %s\n", "concept", "layer", "train_acc", "val_acc",
                    "status");
      out << line;
      for (const auto& s : probes) {
        std::snprintf(line, sizeof line, "%-16s %-16s %10.6f %10.6f  %s\n", s.concept_name.c_str(), s.layer.c_str(),
                      s.train_accuracy, s.val_accuracy, s.learned() ? "learned" : "concept not learned at this layer");
        out << line;
      }
      if (!report_activations.empty()) {
        std::snprintf(line, sizeof line, "\n%-32s %-16s %-16s %12s\n", "image", "layer", "concept", "max_S_k");
        out << line;
        for (const auto& a : report_activations) {
          const Tensor3 t = read_dump(a);
          bool matched = false;
          for (const auto& s : probes) {
            if (s.layer != t.meta.layer) continue;
            matched = true;
            const MapStats st = map_stats(relevance_map(t, s));
            std::snprintf(line, sizeof line, "%-32s %-16s %-16s %12.6f\n", t.meta.image_id.c_str(),
                          t.meta.layer.c_str(), s.concept_name.c_str(), st.max);
            out << line;
          }
          if (!matched) throw Error(ErrorCode::LayerMismatch, "no probe at layer '" + t.meta.layer + "' for " + a);
        }
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace sacv
