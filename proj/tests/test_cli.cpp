#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "sacv/cli.hpp"
#include "sacv/concept_probe.hpp"
#include "sacv/toy_model.hpp"
#include "support/helpers.hpp"
#include "support/rf_oracle.hpp"

using namespace sacv;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "sacv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(int(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t file_count(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

// One toy-demo tree shared by the tests below (about five seconds to build).
const fs::path& demo_dir() {
  static const fs::path dir = [] {
    auto d = testing::scratch_dir("cli-demo") / "demo";
    const auto r = run({"toy-demo", d.string()});
    REQUIRE(r.code == kExitOk);
    return d;
  }();
  return dir;
}

// Dotted and plain guidance dumps in one directory: the "dotted+plain"
// random set.
fs::path mixed_negatives() {
  static const fs::path dir = [] {
    auto d = testing::scratch_dir("cli-mixed");
    for (const char* kind : {"dotted", "plain"})
      for (const auto& e : fs::directory_iterator(demo_dir() / "guidance" / kind))
        fs::copy_file(e.path(), d / e.path().filename());
    return d;
  }();
  return dir;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::string image_file(const std::string& id, const std::string& suffix) {
  return (demo_dir() / "images" / (id + suffix)).string();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 1, help exits 0") {
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"rf", "--arch", "a.json"}).code == kExitUsage);
    CHECK(run({"rf", "--arch", "a.json", "--layer", "x", "--loc", "3;4"}).code == kExitUsage);
    CHECK(run({"explain", "--alpha", "2"}).code == kExitUsage);
    const auto help = run({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("toy-demo") != std::string::npos);
  }

  TEST_CASE("toy-demo writes the fixture layout and a summary") {
    const auto& d = demo_dir();
    for (const char* p : {"arch.json", "summary.txt", "guidance/striped", "guidance/dotted", "guidance/plain",
                          "probes/striped_conv2_relu.dump", "probes/striped_conv1_relu.dump", "images", "masks", "maps"})
      CHECK_MESSAGE(fs::exists(d / p), p);
    const std::string summary = slurp(d / "summary.txt");
    const auto at = summary.find("conv2_relu val_accuracy ");
    REQUIRE(at != std::string::npos);
    CHECK(std::stod(summary.substr(at + 24)) >= 0.95);
    CHECK(parse_arch(slurp(d / "arch.json")) == toy::export_toy_arch(toy::build_toy_net(0)));
  }

  TEST_CASE("toy-demo refuses a non-empty directory unless forced") {
    const auto r = run({"toy-demo", demo_dir().string()});
    CHECK(r.code == kExitDomain);
    CHECK(r.err.find("OutputExists") != std::string::npos);
  }

  TEST_CASE("probe-train: striped vs dotted+plain at both layers") {
    const auto out = testing::scratch_dir("cli-train");
    std::map<std::string, double> val;
    for (const char* layer : {"conv1_relu", "conv2_relu"}) {
      const auto prefix = (out / (std::string("striped_") + layer)).string();
      const auto r = run({"probe-train", "--concept", "striped", "--positives", (demo_dir() / "guidance/striped").string(),
                          "--negatives", mixed_negatives().string(), "--layer", layer, "--out", prefix});
      REQUIRE(r.code == kExitOk);
      const auto report = read_json(prefix + ".report.json");
      val[layer] = report["val_accuracy"].get<double>();
      CHECK(report.contains("converged"));
      CHECK(read_sacv(prefix + ".dump").layer == layer);
    }
    MESSAGE("cli val_accuracy conv1_relu " << val["conv1_relu"] << ", conv2_relu " << val["conv2_relu"]);
    CHECK(val["conv2_relu"] >= 0.95);
    CHECK(val["conv1_relu"] < val["conv2_relu"]);
  }

  TEST_CASE("probe-train is byte-reproducible") {
    const auto out = testing::scratch_dir("cli-repro");
    for (const char* name : {"a", "b"}) {
      const auto r = run({"probe-train", "--concept", "striped", "--positives", (demo_dir() / "guidance/striped").string(),
                          "--negatives", (demo_dir() / "guidance/dotted").string(), "--layer", "conv2_relu",
                          "--max-iters", "200", "--out", (out / name).string()});
      REQUIRE(r.code == kExitOk);
    }
    CHECK(slurp(out / "a.dump") == slurp(out / "b.dump"));
    CHECK(slurp(out / "a.report.json") == slurp(out / "b.report.json"));
  }

  TEST_CASE("probe-train with repeated --negatives trains an ensemble") {
    const auto out = testing::scratch_dir("cli-ensemble");
    const auto r = run({"probe-train", "--concept", "striped", "--positives", (demo_dir() / "guidance/striped").string(),
                        "--negatives", (demo_dir() / "guidance/dotted").string(), "--negatives",
                        (demo_dir() / "guidance/noise").string(), "--layer", "conv2_relu", "--max-iters", "500",
                        "--out", (out / "ens").string()});
    REQUIRE(r.code == kExitOk);
    CHECK(fs::exists(out / "ens.m0.dump"));
    CHECK(fs::exists(out / "ens.m1.dump"));
    const auto report = read_json(out / "ens.report.json");
    CHECK(report["members"].size() == 2);
    CHECK(report.contains("min_cosine"));
  }

  TEST_CASE("probe-train domain errors exit 2 with the typed name") {
    const auto empty = testing::scratch_dir("cli-empty");
    auto r = run({"probe-train", "--concept", "c", "--positives", empty.string(), "--negatives",
                  (demo_dir() / "guidance/dotted").string(), "--layer", "conv2_relu", "--out", (empty / "x").string()});
    CHECK(r.code == kExitDomain);
    CHECK(r.err.find("EmptySide") != std::string::npos);
    r = run({"probe-train", "--concept", "c", "--positives", (demo_dir() / "guidance/striped").string(), "--negatives",
             (demo_dir() / "guidance/dotted").string(), "--layer", "features.25", "--out", (empty / "x").string()});
    CHECK(r.code == kExitDomain);
    CHECK(r.err.find("LayerMismatch") != std::string::npos);
  }

  TEST_CASE("explain writes 2 files for an activation and 5 with gradient and arch") {
    const auto out = testing::scratch_dir("cli-explain");
    const std::string id = "composite_p4_f0_s700";
    const auto sacv = (demo_dir() / "probes/striped_conv2_relu.dump").string();
    auto r = run({"explain", "--sacv", sacv, "--activation", image_file(id, ".conv2_relu.activation.dump"),
                  "--out-prefix", (out / "a" / "x").string()});
    REQUIRE(r.code == kExitOk);
    CHECK(file_count(out / "a") == 2);
    CHECK(fs::exists(out / "a" / "x.relevance.csv"));
    CHECK(fs::exists(out / "a" / "x.relevance.png"));

    r = run({"explain", "--sacv", sacv, "--activation", image_file(id, ".conv2_relu.activation.dump"), "--gradient",
             image_file(id, ".conv2_relu.gradient.dump"), "--arch", (demo_dir() / "arch.json").string(), "--image",
             image_file(id, ".input.dump"), "--out-prefix", (out / "b" / "x").string()});
    REQUIRE(r.code == kExitOk);
    CHECK(file_count(out / "b") == 5);
    CHECK(r.out.find("layer_sensitivity") != std::string::npos);
    CHECK(slurp(out / "b" / "x.contribution.csv") ==
          slurp(demo_dir() / "maps" / (id + ".conv2_relu.contribution.csv")));
  }

  TEST_CASE("explain with a concept vector of the wrong width exits 2 (DimensionMismatch)") {
    const auto out = testing::scratch_dir("cli-dim");
    Sacv s;
    s.v = {1, 0, 0, 0};
    s.layer = "conv2_relu";
    write_sacv(s, out / "narrow.dump");
    const auto r = run({"explain", "--sacv", (out / "narrow.dump").string(), "--activation",
                        image_file("composite_p4_f0_s700", ".conv2_relu.activation.dump"), "--out-prefix",
                        (out / "x").string()});
    CHECK(r.code == kExitDomain);
    CHECK(r.err.find("DimensionMismatch") != std::string::npos);
    CHECK(file_count(out) == 1);
  }

  TEST_CASE("rf prints the rectangle") {
    const auto out = testing::scratch_dir("cli-rf");
    {
      std::ofstream f(out / "identity.json");
      f << R"({"input_size": [8, 8], "layers": [{"name": "id", "kind": "elementwise", "kernel": [1, 1], "stride": [1, 1], "padding": [0, 0]}]})";
    }
    auto r = run({"rf", "--arch", (out / "identity.json").string(), "--layer", "id", "--loc", "3,4"});
    CHECK(r.code == kExitOk);
    CHECK(r.out == "rows 3..3 cols 4..4\n");

    const auto arch_path = (demo_dir() / "arch.json").string();
    r = run({"rf", "--arch", arch_path, "--layer", "conv2_relu", "--loc", "0,0"});
    const PixelRect box = testing::gradient_support_box(parse_arch(slurp(arch_path)), "conv2_relu", 0, 0);
    CHECK(r.out == "rows " + std::to_string(box.row0) + ".." + std::to_string(box.row1) + " cols " +
                       std::to_string(box.col0) + ".." + std::to_string(box.col1) + "\n");

    r = run({"rf", "--arch", arch_path, "--layer", "conv9", "--loc", "0,0"});
    CHECK(r.code == kExitDomain);
    CHECK(r.err.find("UnknownLayer") != std::string::npos);
    r = run({"rf", "--arch", arch_path, "--layer", "conv2_relu", "--loc", "16,0"});
    CHECK(r.code == kExitDomain);
  }

  TEST_CASE("report tabulates probes and max relevance") {
    const auto r = run({"report", "--probe", (demo_dir() / "probes/striped_conv1_relu.dump").string(), "--probe",
                        (demo_dir() / "probes/striped_conv2_relu.dump").string(), "--activation",
                        image_file("composite_p4_f0_s700", ".conv2_relu.activation.dump")});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("conv1_relu") != std::string::npos);
    CHECK(r.out.find("composite_p4_f0_s700") != std::string::npos);
    CHECK(r.out.find("max_S_k") != std::string::npos);
  }

  TEST_CASE("config file sits between flags and defaults, and the resolved config is echoed") {
    const auto out = testing::scratch_dir("cli-config");
    {
      std::ofstream f(out / "run.toml");
      f << "seed = 4\n[probe-train]\nmax-iters = 40\nl2-lambda = 0.01\n";
    }
    const std::vector<std::string> base = {"--config", (out / "run.toml").string(), "probe-train", "--concept", "striped",
                                           "--positives", (demo_dir() / "guidance/striped").string(), "--negatives",
                                           (demo_dir() / "guidance/dotted").string(), "--layer", "conv2_relu"};
    auto args = base;
    args.insert(args.end(), {"--out", (out / "file").string()});
    auto r = run(args);
    REQUIRE(r.code == kExitOk);
    CHECK(r.err.find("seed=4") != std::string::npos);
    CHECK(r.err.find("max-iters=40") != std::string::npos);
    CHECK(r.err.find("l2-lambda=0.01") != std::string::npos);
    CHECK(r.err.find("learning-rate=0.5") != std::string::npos);
    CHECK(read_json(out / "file.report.json")["iterations"].get<int>() <= 40);

    args = base;
    args.insert(args.end(), {"--out", (out / "flag").string(), "--max-iters", "7"});
    r = run(args);
    REQUIRE(r.code == kExitOk);
    CHECK(r.err.find("max-iters=7") != std::string::npos);
    CHECK(read_json(out / "flag.report.json")["iterations"].get<int>() <= 7);
    CHECK(read_json(out / "flag.report.json")["seed"].get<unsigned>() == 4);
  }
}
