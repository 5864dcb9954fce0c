#include "sacv/concept_probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "sacv/error.hpp"

namespace sacv {
namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double score(std::span<const double> row, std::span<const double> v, double bias) {
  double z = bias;
  for (std::size_t c = 0; c < v.size(); ++c) z += v[c] * row[c];
  return z;
}

void append_rows(ProbeDataset& ds, const Tensor3& t, std::uint8_t label, const BuildOptions& opt) {
  const std::size_t h = t.shape.height, w = t.shape.width;
  const bool drop = opt.drop_border && h >= 3 && w >= 3;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      if (drop && (i == 0 || j == 0 || i + 1 == h || j + 1 == w)) continue;
      for (std::size_t c = 0; c < t.shape.channels; ++c) ds.vectors.push_back(t.at(c, i, j));
      ds.labels.push_back(label);
      ds.groups.push_back(t.meta.image_id);
    }
  }
}

double accuracy(const ProbeDataset& ds, std::span<const std::size_t> rows,
                std::span<const double> v, double bias) {
  if (rows.empty()) return 0.0;
  std::size_t hits = 0;
  for (auto r : rows) {
    const int predicted = score(ds.row(r), v, bias) > 0.0 ? 1 : 0;
    if (predicted == ds.labels[r]) ++hits;
  }
  return double(hits) / double(rows.size());
}

}  // namespace

ProbeDataset build_dataset(std::span<const Tensor3> positives, std::span<const Tensor3> negatives,
                           const BuildOptions& options) {
  if (positives.empty()) throw Error(ErrorCode::EmptySide, "no positive (concept) images");
  if (negatives.empty()) throw Error(ErrorCode::EmptySide, "no negative (random set) images");
  const Tensor3& first = positives.front();
  ProbeDataset ds;
  ds.dim = first.shape.channels;
  ds.layer = first.meta.layer;
  auto check = [&](const Tensor3& t) {
    if (t.meta.kind != TensorKind::activation) {
      throw Error(ErrorCode::WrongKind, "image '" + t.meta.image_id + "' is not an activation");
    }
    if (t.meta.layer != ds.layer) {
      throw Error(ErrorCode::LayerMismatch, "'" + t.meta.layer + "' vs '" + ds.layer + "'");
    }
    if (t.shape.channels != ds.dim) {
      throw Error(ErrorCode::ChannelMismatch, std::to_string(t.shape.channels) + " channels vs " +
                                                  std::to_string(ds.dim));
    }
  };
  for (const auto& t : positives) check(t);
  for (const auto& t : negatives) check(t);
  for (const auto& t : positives) append_rows(ds, t, 1, options);
  for (const auto& t : negatives) append_rows(ds, t, 0, options);
  return ds;
}

ChannelStats fit_channel_stats(const ProbeDataset& ds, std::span<const std::size_t> rows) {
  ChannelStats stats;
  stats.mean.resize(ds.dim);
  stats.std.resize(ds.dim);
  const double n = double(rows.size());
  for (std::size_t c = 0; c < ds.dim; ++c) {
    const double mean =
        pairwise_sum(0, rows.size(), [&](std::size_t k) { return ds.row(rows[k])[c]; }) / n;
    const double var = pairwise_sum(0, rows.size(), [&](std::size_t k) {
                         const double d = ds.row(rows[k])[c] - mean;
                         return d * d;
                       }) / n;
    const double sd = std::sqrt(var);
    stats.mean[c] = mean;
    stats.std[c] = sd < kDegenerateStd ? 1.0 : sd;
  }
  return stats;
}

ProbeDataset apply_channel_stats(const ProbeDataset& ds, const ChannelStats& stats) {
  if (ds.channel_stats) throw Error(ErrorCode::AlreadyStandardized, "dataset already standardized");
  if (stats.mean.size() != ds.dim || stats.std.size() != ds.dim) {
    throw Error(ErrorCode::DimensionMismatch, "channel stats do not match dataset width");
  }
  ProbeDataset out = ds;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < ds.dim; ++c) {
      double& x = out.vectors[r * ds.dim + c];
      x = (x - stats.mean[c]) / stats.std[c];
    }
  }
  out.channel_stats = stats;
  return out;
}

ProbeDataset standardize(const ProbeDataset& ds) {
  if (ds.channel_stats) throw Error(ErrorCode::AlreadyStandardized, "dataset already standardized");
  const auto order = canonical_order(ds);
  return apply_channel_stats(ds, fit_channel_stats(ds, order));
}

std::vector<std::size_t> canonical_order(const ProbeDataset& ds) {
  std::vector<std::size_t> order(ds.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ds.groups[a] < ds.groups[b]; });
  return order;
}

GroupSplit split_by_group(const ProbeDataset& ds, double val_fraction, unsigned seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw Error(ErrorCode::BadConfig, "val_fraction must lie in [0, 1)");
  }
  // Group -> bitmask of labels it contains; std::map keeps ids sorted.
  std::map<std::string, int> group_labels;
  for (std::size_t r = 0; r < ds.rows(); ++r) group_labels[ds.groups[r]] |= 1 << ds.labels[r];

  std::vector<std::string> groups;
  for (const auto& [g, _] : group_labels) groups.push_back(g);
  std::mt19937_64 engine(seed);
  for (std::size_t k = groups.size(); k > 1; --k) {
    const std::size_t pick = static_cast<std::size_t>(engine() % k);
    std::swap(groups[k - 1], groups[pick]);
  }

  std::map<std::string, bool> held_out;
  if (val_fraction > 0.0) {
    for (int stratum = 1; stratum <= 3; ++stratum) {
      std::vector<std::string> members;
      for (const auto& g : groups) {
        if (group_labels[g] == stratum) members.push_back(g);
      }
      if (members.size() < 2) continue;
      auto take = static_cast<std::size_t>(std::llround(val_fraction * double(members.size())));
      take = std::clamp<std::size_t>(take, 1, members.size() - 1);
      for (std::size_t k = 0; k < take; ++k) held_out[members[k]] = true;
    }
  }

  GroupSplit split;
  for (auto r : canonical_order(ds)) {
    (held_out.count(ds.groups[r]) ? split.validation : split.train).push_back(r);
  }
  for (const auto& [g, _] : held_out) split.validation_groups.push_back(g);

  auto has_both = [&](const std::vector<std::size_t>& rows) {
    bool pos = false, neg = false;
    for (auto r : rows) (ds.labels[r] ? pos : neg) = true;
    return pos && neg;
  };
  if (!has_both(split.train)) {
    throw Error(ErrorCode::SingleClassAfterSplit, "training partition lacks one label");
  }
  if (val_fraction > 0.0 && !has_both(split.validation)) {
    throw Error(ErrorCode::SingleClassAfterSplit,
                "validation partition lacks one label; supply more guidance images per side");
  }
  return split;
}

AffineProbe folded(const Sacv& s) {
  AffineProbe a{s.v, s.bias};
  if (s.channel_stats) {
    for (std::size_t c = 0; c < s.v.size(); ++c) {
      a.weights[c] = s.v[c] / s.channel_stats->std[c];
      a.bias -= s.v[c] * s.channel_stats->mean[c] / s.channel_stats->std[c];
    }
  }
  return a;
}

std::vector<double> unit_direction(const Sacv& s) {
  auto w = folded(s).weights;
  double norm = 0.0;
  for (double x : w) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : w) x /= norm;
  }
  return w;
}

double logistic_loss(const ProbeDataset& ds, std::span<const std::size_t> rows,
                     std::span<const double> v, double bias, double l2_lambda) {
  const double data = pairwise_sum(0, rows.size(), [&](std::size_t k) {
    const double z = score(ds.row(rows[k]), v, bias);
    return softplus(z) - ds.labels[rows[k]] * z;
  });
  double penalty = 0.0;
  for (double x : v) penalty += x * x;
  return data / double(rows.size()) + 0.5 * l2_lambda * penalty;
}

namespace {

// Training rows copied out in canonical order, so the inner loops are dense.
struct DenseRows {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> x;  // n x dim
  std::vector<double> y;
};

DenseRows gather(const ProbeDataset& ds, std::span<const std::size_t> rows) {
  DenseRows d;
  d.n = rows.size();
  d.dim = ds.dim;
  d.x.reserve(d.n * d.dim);
  for (auto r : rows) {
    const auto row = ds.row(r);
    d.x.insert(d.x.end(), row.begin(), row.end());
    d.y.push_back(ds.labels[r]);
  }
  return d;
}

void margins(const DenseRows& d, std::span<const double> v, double bias, std::vector<double>& z) {
  z.resize(d.n);
  for (std::size_t k = 0; k < d.n; ++k) {
    const double* row = d.x.data() + k * d.dim;
    double acc = bias;
    for (std::size_t c = 0; c < d.dim; ++c) acc += v[c] * row[c];
    z[k] = acc;
  }
}

double penalty(std::span<const double> v, double l2_lambda) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return 0.5 * l2_lambda * acc;
}

// Mean data loss at margins z; also leaves sigmoid(z) - y in `residual`.
double loss_and_residual(const DenseRows& d, const std::vector<double>& z, std::vector<double>& residual) {
  residual.resize(d.n);
  const double data = pairwise_sum(0, d.n, [&](std::size_t k) {
    const double e = std::exp(-std::abs(z[k]));
    const double sig = z[k] >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
    residual[k] = sig - d.y[k];
    return std::max(z[k], 0.0) + std::log1p(e) - d.y[k] * z[k];
  });
  return data / double(d.n);
}

// out[c] = pairwise sum over rows of residual[k] * x[k][c]; out[dim] = sum of
// residuals. `scratch` holds one row of partial sums per recursion level.
void accumulate_gradient(const DenseRows& d, const std::vector<double>& residual, std::size_t begin,
                         std::size_t end, double* out, double* scratch) {
  const std::size_t width = d.dim + 1;
  std::fill(out, out + width, 0.0);
  if (end - begin <= 8) {
    for (std::size_t k = begin; k < end; ++k) {
      const double* row = d.x.data() + k * d.dim;
      for (std::size_t c = 0; c < d.dim; ++c) out[c] += residual[k] * row[c];
      out[d.dim] += residual[k];
    }
    return;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  accumulate_gradient(d, residual, begin, mid, out, scratch + width);
  accumulate_gradient(d, residual, mid, end, scratch, scratch + width);
  for (std::size_t c = 0; c < width; ++c) out[c] += scratch[c];
}

}  // namespace

Sacv train_probe(const ProbeDataset& input, const ProbeConfig& cfg, const std::string& concept_name) {
  if (cfg.l2_lambda < 0 || !(cfg.learning_rate > 0) || cfg.max_iters < 1 || !(cfg.tol > 0)) {
    throw Error(ErrorCode::BadConfig, "probe config out of range");
  }
  if (input.rows() == 0) throw Error(ErrorCode::EmptySide, "empty dataset");
  const GroupSplit split = split_by_group(input, cfg.val_fraction, cfg.seed);

  ProbeDataset ds = input;
  if (cfg.standardize && !ds.channel_stats) {
    ds = apply_channel_stats(input, fit_channel_stats(input, split.train));
  }

  const DenseRows train = gather(ds, split.train);
  const std::size_t dim = ds.dim;
  const std::size_t n = train.n;
  std::vector<double> v(dim, 0.0), trial_v(dim), grad(dim + 1);
  double bias = 0.0;
  std::vector<double> z, step_dir(n), trial_z(n), residual(n);

  Sacv out;
  out.stats.train_rows = n;
  out.stats.validation_rows = split.validation.size();
  out.stats.validation_groups = split.validation_groups;

  std::vector<double> trial_residual(n);
  std::vector<double> scratch((dim + 1) * 64);
  margins(train, v, bias, z);
  double loss = loss_and_residual(train, z, residual) + penalty(v, cfg.l2_lambda);
  out.stats.loss_history.push_back(loss);
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    accumulate_gradient(train, residual, 0, n, grad.data(), scratch.data());
    for (std::size_t c = 0; c < dim; ++c) grad[c] = grad[c] / double(n) + cfg.l2_lambda * v[c];
    grad[dim] /= double(n);
    // Margin change per unit step along -grad.
    margins(train, std::span<const double>(grad.data(), dim), grad[dim], step_dir);

    // Full-batch step, halved until the objective does not increase.
    double step = cfg.learning_rate;
    double trial_bias = bias;
    double trial_loss = loss;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings, step *= 0.5) {
      for (std::size_t c = 0; c < dim; ++c) trial_v[c] = v[c] - step * grad[c];
      trial_bias = bias - step * grad[dim];
      for (std::size_t k = 0; k < n; ++k) trial_z[k] = z[k] - step * step_dir[k];
      trial_loss = loss_and_residual(train, trial_z, trial_residual) + penalty(trial_v, cfg.l2_lambda);
      if (trial_loss <= loss) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.stats.converged = true;
      break;
    }
    const double decrease = loss - trial_loss;
    v.swap(trial_v);
    bias = trial_bias;
    z.swap(trial_z);
    residual.swap(trial_residual);
    loss = trial_loss;
    out.stats.loss_history.push_back(loss);
    if (decrease < cfg.tol) {
      out.stats.converged = true;
      ++iter;
      break;
    }
  }
  // Margins were updated incrementally; report the loss of the final
  // parameters evaluated from scratch.
  margins(train, v, bias, z);
  loss = loss_and_residual(train, z, residual) + penalty(v, cfg.l2_lambda);

  out.v = v;
  out.bias = bias;
  out.layer = ds.layer;
  out.concept_name = concept_name;
  out.seed = cfg.seed;
  out.channel_stats = ds.channel_stats;
  out.stats.final_loss = loss;
  out.stats.iterations = iter;
  out.train_accuracy = accuracy(ds, split.train, v, bias);
  out.val_accuracy = split.validation.empty() ? out.train_accuracy
                                              : accuracy(ds, split.validation, v, bias);
  return out;
}

double evaluate_probe(const Sacv& s, const ProbeDataset& ds) {
  if (s.v.size() != ds.dim) {
    throw Error(ErrorCode::DimensionMismatch, "probe has " + std::to_string(s.v.size()) +
                                                  " channels, dataset " + std::to_string(ds.dim));
  }
  std::vector<std::size_t> rows(ds.rows());
  std::iota(rows.begin(), rows.end(), 0);
  if (ds.channel_stats) {
    if (!s.channel_stats || !(*s.channel_stats == *ds.channel_stats)) {
      throw Error(ErrorCode::StandardizationMismatch,
                  "dataset is standardized with constants the probe was not trained with");
    }
    return accuracy(ds, rows, s.v, s.bias);
  }
  const AffineProbe a = folded(s);
  return accuracy(ds, rows, a.weights, a.bias);
}

EnsembleReport train_ensemble(std::span<const Tensor3> positives,
                              std::span<const std::vector<Tensor3>> negative_pool,
                              const ProbeConfig& cfg, const std::string& concept_name,
                              const EnsembleOptions& options) {
  if (negative_pool.size() < 2) {
    throw Error(ErrorCode::EnsembleTooSmall, "an ensemble needs at least 2 negative sets");
  }
  EnsembleReport report;
  for (std::size_t m = 0; m < negative_pool.size(); ++m) {
    ProbeConfig member_cfg = cfg;
    member_cfg.seed = cfg.seed + static_cast<unsigned>(m) * options.seed_stride;
    const ProbeDataset ds = build_dataset(positives, negative_pool[m], options.build);
    report.members.push_back(train_probe(ds, member_cfg, concept_name));
  }
  const double count = double(report.members.size());
  for (const auto& s : report.members) report.mean_val_accuracy += s.val_accuracy / count;
  double var = 0.0;
  for (const auto& s : report.members) {
    var += (s.val_accuracy - report.mean_val_accuracy) * (s.val_accuracy - report.mean_val_accuracy);
  }
  report.std_val_accuracy = std::sqrt(var / count);

  // Cosines compare the stored (standardized-space) vectors.
  std::vector<std::vector<double>> dirs;
  for (const auto& s : report.members) {
    std::vector<double> u = s.v;
    double norm = 0.0;
    for (double x : u) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& x : u) x /= norm;
    }
    dirs.push_back(std::move(u));
  }
  const std::size_t m = dirs.size();
  report.cosine.assign(m, std::vector<double>(m, 0.0));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      double dot = 0.0;
      for (std::size_t c = 0; c < dirs[a].size(); ++c) dot += dirs[a][c] * dirs[b][c];
      report.cosine[a][b] = dot;
      if (a != b) report.min_cosine = std::min(report.min_cosine, dot);
    }
  }
  return report;
}

DumpRecord sacv_to_record(const Sacv& s) {
  for (double x : s.v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::InvalidTensor, "concept vector has non-finite entries");
  }
  if (s.v.empty()) throw Error(ErrorCode::InvalidTensor, "empty concept vector");
  DumpRecord rec;
  rec.meta["layer"] = s.layer;
  rec.meta["kind"] = "sacv";
  rec.meta["image_id"] = "";
  rec.meta["class_index"] = nullptr;
  rec.meta["source_model"] = "";
  rec.meta["concept"] = s.concept_name;
  rec.meta["bias"] = s.bias;
  rec.meta["train_accuracy"] = s.train_accuracy;
  rec.meta["val_accuracy"] = s.val_accuracy;
  rec.meta["seed"] = s.seed;
  rec.meta["channel_mean"] = s.channel_stats ? nlohmann::json(s.channel_stats->mean) : nlohmann::json(nullptr);
  rec.meta["channel_std"] = s.channel_stats ? nlohmann::json(s.channel_stats->std) : nlohmann::json(nullptr);
  rec.dtype = Dtype::float64;
  rec.dims = {s.v.size()};
  rec.f64 = s.v;
  return rec;
}

Sacv sacv_from_record(const DumpRecord& rec) {
  const auto& m = rec.meta;
  if (m.value("kind", std::string{}) != "sacv") {
    throw Error(ErrorCode::WrongKind, "container does not hold a concept vector");
  }
  if (rec.dims.size() != 1) throw Error(ErrorCode::BadMetadata, "concept vector must have ndim 1");
  Sacv s;
  try {
    s.layer = m.at("layer").get<std::string>();
    s.concept_name = m.at("concept").get<std::string>();
    s.bias = m.at("bias").get<double>();
    s.train_accuracy = m.at("train_accuracy").get<double>();
    s.val_accuracy = m.at("val_accuracy").get<double>();
    s.seed = m.at("seed").get<unsigned>();
    const auto& mean = m.at("channel_mean");
    const auto& sd = m.at("channel_std");
    if (!mean.is_null() || !sd.is_null()) {
      s.channel_stats = ChannelStats{mean.get<std::vector<double>>(), sd.get<std::vector<double>>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadMetadata, std::string("concept vector metadata: ") + e.what());
  }
  s.v = rec.dtype == Dtype::float64 ? rec.f64 : std::vector<double>(rec.f32.begin(), rec.f32.end());
  if (s.channel_stats &&
      (s.channel_stats->mean.size() != s.v.size() || s.channel_stats->std.size() != s.v.size())) {
    throw Error(ErrorCode::BadMetadata, "channel stats length differs from vector length");
  }
  if (s.layer.empty()) throw Error(ErrorCode::BadMetadata, "layer name is empty");
  return s;
}

void write_sacv(const Sacv& s, const std::filesystem::path& destination) {
  write_record(sacv_to_record(s), destination);
}

Sacv read_sacv(const std::filesystem::path& source) { return sacv_from_record(read_record(source)); }

}  // namespace sacv
