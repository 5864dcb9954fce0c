#pragma once

// Per-location linear concept probes. Every spatial location of every
// guidance feature map becomes one training row; the normal of the trained
// hyperplane is the spatial activation concept vector.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sacv/tensor_io.hpp"

namespace sacv {

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;  // divisors actually used (1 for degenerate channels)

  bool operator==(const ChannelStats&) const = default;
};

struct ProbeDataset {
  std::size_t dim = 0;                // C_l
  std::string layer;
  std::vector<double> vectors;        // rows x dim, row-major
  std::vector<std::uint8_t> labels;   // 1 = concept, 0 = random set
  std::vector<std::string> groups;    // source image_id per row
  std::optional<ChannelStats> channel_stats;

  std::size_t rows() const { return labels.size(); }
  std::span<const double> row(std::size_t r) const { return {vectors.data() + r * dim, dim}; }
};

struct BuildOptions {
  /// Skip the outermost ring of locations of every map.
  bool drop_border = false;
};

ProbeDataset build_dataset(std::span<const Tensor3> positives, std::span<const Tensor3> negatives,
                           const BuildOptions& options = {});

inline constexpr double kDegenerateStd = 1e-12;

/// Per-channel mean/std over the given rows (population std).
ChannelStats fit_channel_stats(const ProbeDataset& ds, std::span<const std::size_t> rows);
ProbeDataset apply_channel_stats(const ProbeDataset& ds, const ChannelStats& stats);
/// Fits on all rows and applies. Throws AlreadyStandardized.
ProbeDataset standardize(const ProbeDataset& ds);

struct ProbeConfig {
  double l2_lambda = 1e-3;
  double learning_rate = 0.5;
  int max_iters = 5000;
  double tol = 1e-9;
  double val_fraction = 0.2;
  unsigned seed = 0;
  bool standardize = true;
};

/// Row indices of each partition, both in canonical row order.
struct GroupSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::string> validation_groups;
};

/// Canonical row order: rows sorted by group id, input order kept inside a
/// group. Training sums run over this order so results do not depend on how
/// groups were interleaved in the input.
std::vector<std::size_t> canonical_order(const ProbeDataset& ds);

/// Holds out round(val_fraction * n) groups of every label stratum after a
/// seeded shuffle, keeping at least one group of each stratum in training.
GroupSplit split_by_group(const ProbeDataset& ds, double val_fraction, unsigned seed);

struct TrainStats {
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loss_history;
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
  std::vector<std::string> validation_groups;
};

/// Trained concept vector. `v` and `bias` live in standardized space when
/// channel_stats is set; use `folded()` to apply them to raw activations.
struct Sacv {
  std::vector<double> v;
  double bias = 0.0;
  std::string layer;
  std::string concept_name;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  unsigned seed = 0;
  std::optional<ChannelStats> channel_stats;
  TrainStats stats;

  /// Probes under this validation accuracy are reported as "concept not
  /// learned at this layer".
  static constexpr double kLearnedThreshold = 0.6;
  bool learned() const { return val_accuracy >= kLearnedThreshold; }
};

struct AffineProbe {
  std::vector<double> weights;
  double bias = 0.0;
};

/// (v / sigma, bias - sum v mu / sigma): the probe expressed on raw
/// activations.
AffineProbe folded(const Sacv& s);
/// Folded direction only, unit-normalized; zero vector stays zero.
std::vector<double> unit_direction(const Sacv& s);

/// Mean L2-regularized logistic loss, penalty (lambda / 2) |v|^2 on v only.
double logistic_loss(const ProbeDataset& ds, std::span<const std::size_t> rows,
                     std::span<const double> v, double bias, double l2_lambda);

Sacv train_probe(const ProbeDataset& ds, const ProbeConfig& cfg, const std::string& concept_name = "");

/// Fraction of rows whose decision (score > 0 => concept) matches the label.
double evaluate_probe(const Sacv& s, const ProbeDataset& ds);

struct EnsembleOptions {
  /// Member m trains with seed cfg.seed + m * seed_stride.
  unsigned seed_stride = 1;
  BuildOptions build;
};

struct EnsembleReport {
  std::vector<Sacv> members;
  double mean_val_accuracy = 0.0;
  double std_val_accuracy = 0.0;
  std::vector<std::vector<double>> cosine;  // members x members
  double min_cosine = 1.0;
};

EnsembleReport train_ensemble(std::span<const Tensor3> positives,
                              std::span<const std::vector<Tensor3>> negative_pool,
                              const ProbeConfig& cfg, const std::string& concept_name = "",
                              const EnsembleOptions& options = {});

DumpRecord sacv_to_record(const Sacv& s);
Sacv sacv_from_record(const DumpRecord& record);
void write_sacv(const Sacv& s, const std::filesystem::path& destination);
Sacv read_sacv(const std::filesystem::path& source);

/// Deterministic pairwise (tree) sum of f(k) for k in [begin, end).
template <typename F>
double pairwise_sum(std::size_t begin, std::size_t end, const F& f) {
  if (end - begin <= 8) {
    double acc = 0.0;
    for (std::size_t k = begin; k < end; ++k) acc += f(k);
    return acc;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  return pairwise_sum(begin, mid, f) + pairwise_sum(mid, end, f);
}

}  // namespace sacv
