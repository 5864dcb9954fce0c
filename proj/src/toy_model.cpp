#include "sacv/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sacv/error.hpp"

namespace sacv::toy {
namespace {

// mt19937_64 output is fixed by the standard; the distributions are not, so
// floats are derived from the raw bits here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int below(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 engine_;
};

// Seed offsets, one per consumer, so all randomness flows from one seed.
constexpr std::uint64_t kConv1Stream = 0x1001;
constexpr std::uint64_t kConv2Stream = 0x2002;
constexpr std::uint64_t kTextureStream = 0x3003;

enum class LayerId { conv1_relu, conv2_relu };

LayerId parse_layer(std::string_view layer) {
  if (layer == kShallowLayer) return LayerId::conv1_relu;
  if (layer == kDeepLayer) return LayerId::conv2_relu;
  throw Error(ErrorCode::UnknownLayer,
              "toy net has no layer '" + std::string(layer) + "' (expected conv1_relu or conv2_relu)");
}

void check_class(int class_index) {
  if (class_index < 0 || class_index >= kClasses) {
    throw Error(ErrorCode::BadClass, "class index " + std::to_string(class_index) + " not in [0, 3)");
  }
}

// 3x3 convolution, stride 1, padding 1 by edge replication, no bias.
Volume conv3x3(const Volume& in, const double* weights, int out_channels) {
  Volume out(out_channels, in.height, in.width);
  for (int o = 0; o < out_channels; ++o) {
    for (int i = 0; i < in.height; ++i) {
      for (int j = 0; j < in.width; ++j) {
        double acc = 0.0;
        for (int c = 0; c < in.channels; ++c) {
          const double* w = weights + (std::size_t(o) * in.channels + c) * 9;
          for (int di = 0; di < 3; ++di) {
            const int y = std::clamp(i + di - 1, 0, in.height - 1);
            for (int dj = 0; dj < 3; ++dj) {
              const int x = std::clamp(j + dj - 1, 0, in.width - 1);
              acc += w[di * 3 + dj] * in.at(c, y, x);
            }
          }
        }
        out.at(o, i, j) = acc;
      }
    }
  }
  return out;
}

// Transpose of conv3x3 with respect to its input.
Volume conv3x3_backward(const Volume& grad_out, const double* weights, int in_channels) {
  Volume grad_in(in_channels, grad_out.height, grad_out.width);
  for (int o = 0; o < grad_out.channels; ++o) {
    for (int i = 0; i < grad_out.height; ++i) {
      for (int j = 0; j < grad_out.width; ++j) {
        const double g = grad_out.at(o, i, j);
        if (g == 0.0) continue;
        for (int c = 0; c < in_channels; ++c) {
          const double* w = weights + (std::size_t(o) * in_channels + c) * 9;
          for (int di = 0; di < 3; ++di) {
            const int y = std::clamp(i + di - 1, 0, grad_out.height - 1);
            for (int dj = 0; dj < 3; ++dj) {
              const int x = std::clamp(j + dj - 1, 0, grad_out.width - 1);
              grad_in.at(c, y, x) += w[di * 3 + dj] * g;
            }
          }
        }
      }
    }
  }
  return grad_in;
}

Volume relu(const Volume& in) {
  Volume out = in;
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

// 2x2 stride-2 max pool; ties go to the first entry in row-major order.
Volume maxpool2(const Volume& in, std::vector<std::size_t>& arg) {
  Volume out(in.channels, in.height / 2, in.width / 2);
  arg.assign(out.data.size(), 0);
  for (int c = 0; c < in.channels; ++c) {
    for (int i = 0; i < out.height; ++i) {
      for (int j = 0; j < out.width; ++j) {
        std::size_t best = in.index(c, 2 * i, 2 * j);
        for (int di = 0; di < 2; ++di) {
          for (int dj = 0; dj < 2; ++dj) {
            const std::size_t k = in.index(c, 2 * i + di, 2 * j + dj);
            if (in.data[k] > in.data[best]) best = k;
          }
        }
        out.at(c, i, j) = in.data[best];
        arg[out.index(c, i, j)] = best;
      }
    }
  }
  return out;
}

Volume maxpool2_backward(const Volume& grad_out, const std::vector<std::size_t>& arg,
                         const Volume& like) {
  Volume grad_in(like.channels, like.height, like.width);
  for (std::size_t k = 0; k < grad_out.data.size(); ++k) grad_in.data[arg[k]] += grad_out.data[k];
  return grad_in;
}

void mask_dead(Volume& grad, const Volume& activation) {
  for (std::size_t k = 0; k < grad.data.size(); ++k) {
    if (!(activation.data[k] > 0.0)) grad.data[k] = 0.0;
  }
}

void finish_from_conv2(const ToyNet& net, ForwardTrace& t) {
  t.relu2 = relu(t.conv2);
  t.pool2 = maxpool2(t.relu2, t.pool2_arg);
  const double area = double(t.pool2.height) * t.pool2.width;
  for (int c = 0; c < kChannels; ++c) {
    double acc = 0.0;
    for (int i = 0; i < t.pool2.height; ++i) {
      for (int j = 0; j < t.pool2.width; ++j) acc += t.pool2.at(c, i, j);
    }
    t.pooled[c] = acc / area;
  }
  for (int k = 0; k < kClasses; ++k) {
    double z = net.head_bias[k];
    for (int c = 0; c < kChannels; ++c) z += net.head_weight[k * kChannels + c] * t.pooled[c];
    t.logits[k] = z;
  }
}

void finish_from_conv1(const ToyNet& net, ForwardTrace& t) {
  t.relu1 = relu(t.conv1);
  t.pool1 = maxpool2(t.relu1, t.pool1_arg);
  t.conv2 = conv3x3(t.pool1, net.conv2.data(), kChannels);
  finish_from_conv2(net, t);
}

Volume input_volume(const SynthImage& img) {
  Volume v(1, img.height, img.width);
  v.data = img.pixels;
  return v;
}

Tensor3 to_tensor(const Volume& v, TensorMeta meta) {
  Tensor3 t = Tensor3::zeros({std::size_t(v.channels), std::size_t(v.height), std::size_t(v.width)},
                             std::move(meta));
  for (std::size_t k = 0; k < v.data.size(); ++k) t.data[k] = static_cast<float>(v.data[k]);
  return t;
}

void check_image(const SynthImage& img) {
  if (img.height < 4 || img.width < 4 ||
      img.pixels.size() != std::size_t(img.height) * img.width) {
    throw Error(ErrorCode::BadSize, "toy net needs a well-formed image of at least 4x4");
  }
}

}  // namespace

std::string class_name(int class_index) {
  check_class(class_index);
  static const char* names[] = {"striped-object", "dotted-object", "plain"};
  return names[class_index];
}

std::string source_model_id(const ToyNet& net) {
  return "toy-net-seed" + std::to_string(net.seed);
}

ToyNet build_toy_net(unsigned seed) {
  ToyNet net;
  net.seed = seed;

  // conv1: oriented edge and blob detectors, then three seeded filters.
  const double vertical[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  const double horizontal[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  const double diagonal[9] = {0, 1, 2, -1, 0, 1, -2, -1, 0};
  const double anti_diagonal[9] = {0, -1, -2, 1, 0, -1, 2, 1, 0};
  const double center_surround[9] = {-1, -1, -1, -1, 8, -1, -1, -1, -1};
  auto set1 = [&](int o, const double* w, double scale) {
    for (int k = 0; k < 9; ++k) net.conv1[o * 9 + k] = w[k] * scale;
  };
  set1(kVerticalEdge, vertical, 0.25);
  set1(kHorizontalEdge, horizontal, 0.25);
  set1(kDiagonalEdge, diagonal, 0.25);
  set1(kAntiDiagonalEdge, anti_diagonal, 0.25);
  set1(kCenterSurround, center_surround, 0.125);
  Rng r1(seed + kConv1Stream);
  for (int o = 5; o < kChannels; ++o) {
    for (int k = 0; k < 9; ++k) net.conv1[o * 9 + k] = r1.uniform(-0.5, 0.5);
  }

  // conv2: channel-mixing patterns over a 3x3 neighbourhood of pooled maps.
  //   0 stripe: rising plus falling vertical edges minus horizontal edges
  //   1 dot:    horizontal edges plus blobs
  //   2 blob:   center-surround response
  //   3..7:     seeded mixtures
  auto w2 = [&](int o, int c, int k) -> double& { return net.conv2[(std::size_t(o) * kChannels + c) * 9 + k]; };
  for (int k = 0; k < 9; ++k) {
    w2(0, kVerticalEdge, k) = 1.0 / 9;
    w2(0, kAntiDiagonalEdge, k) = 1.0 / 9;
    w2(0, kHorizontalEdge, k) = -2.0 / 9;
    w2(0, kCenterSurround, k) = -0.5 / 9;
    w2(1, kHorizontalEdge, k) = 1.0 / 9;
    w2(1, kCenterSurround, k) = 0.5 / 9;
    w2(1, kVerticalEdge, k) = -0.25 / 9;
    w2(2, kCenterSurround, k) = 1.0 / 9;
    w2(2, kDiagonalEdge, k) = 0.25 / 9;
  }
  Rng r2(seed + kConv2Stream);
  for (int o = 3; o < kChannels; ++o) {
    for (int c = 0; c < kChannels; ++c) {
      for (int k = 0; k < 9; ++k) w2(o, c, k) = r2.uniform(-0.3, 0.3) / 9;
    }
  }

  // Head: each textured class favours its detector; plain wins by bias when
  // no texture channel fires.
  auto hw = [&](int k, int c) -> double& { return net.head_weight[k * kChannels + c]; };
  hw(kStripedObject, 0) = 4.0;
  hw(kStripedObject, 1) = -1.0;
  hw(kDottedObject, 1) = 4.0;
  hw(kDottedObject, 0) = -1.0;
  hw(kDottedObject, 2) = 1.0;
  hw(kPlain, 0) = -2.0;
  hw(kPlain, 1) = -2.0;
  hw(kPlain, 2) = -1.0;
  net.head_bias = {0.0, 0.0, 0.5};
  return net;
}

std::string to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::striped: return "striped";
    case TextureKind::dotted: return "dotted";
    case TextureKind::plain: return "plain";
    case TextureKind::noise: return "noise";
    case TextureKind::composite: return "composite";
  }
  return "plain";
}

TextureKind texture_kind_from_string(std::string_view name) {
  for (auto k : {TextureKind::striped, TextureKind::dotted, TextureKind::plain, TextureKind::noise,
                 TextureKind::composite}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::BadConfig, "unknown texture kind '" + std::string(name) + "'");
}

SynthImage synth_texture(TextureKind kind, int height, int width, int period, int phase,
                         unsigned seed) {
  if (height < 8 || width < 8) {
    throw Error(ErrorCode::BadSize, "texture size must be at least 8x8");
  }
  if (period < 2) throw Error(ErrorCode::BadPeriod, "period must be >= 2");

  SynthImage img;
  img.height = height;
  img.width = width;
  img.kind = kind;
  img.pixels.assign(std::size_t(height) * width, 0.5);
  img.mask.assign(std::size_t(height) * width, 0);
  img.id = to_string(kind) + "_p" + std::to_string(period) + "_f" + std::to_string(phase) + "_s" +
           std::to_string(seed);
  Rng rng(std::uint64_t(seed) * 0x9E3779B97F4A7C15ull + kTextureStream +
          static_cast<std::uint64_t>(kind));

  auto stripe_value = [&](int j, double amplitude) {
    const int m = ((j + phase) % period + period) % period;
    return m < period / 2 ? 0.5 + amplitude / 2 : 0.5 - amplitude / 2;
  };

  switch (kind) {
    case TextureKind::striped: {
      const double amplitude = 0.8 + rng.uniform(-0.05, 0.05);
      for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) img.at(i, j) = stripe_value(j, amplitude);
      }
      std::fill(img.mask.begin(), img.mask.end(), 1);
      break;
    }
    case TextureKind::dotted: {
      // Square dots on a lattice with the given spacing; the lattice origin
      // is seeded, the dot size is a third of the spacing.
      const int dot = std::max(1, period / 3);
      const int off_i = rng.below(period);
      const int off_j = (phase + rng.below(period)) % period;
      const double bright = 0.85 + rng.uniform(-0.05, 0.05);
      const double dark = 0.2 + rng.uniform(-0.05, 0.05);
      for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
          const int mi = ((i + off_i) % period + period) % period;
          const int mj = ((j + off_j) % period + period) % period;
          img.at(i, j) = (mi < dot && mj < dot) ? bright : dark;
        }
      }
      std::fill(img.mask.begin(), img.mask.end(), 1);
      break;
    }
    case TextureKind::plain:
      break;
    case TextureKind::noise:
      for (auto& p : img.pixels) p = rng.uniform();
      break;
    case TextureKind::composite: {
      const double amplitude = 0.8 + rng.uniform(-0.05, 0.05);
      for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width / 2; ++j) {
          img.at(i, j) = stripe_value(j, amplitude);
          img.mask[std::size_t(i) * width + j] = 1;
        }
      }
      break;
    }
  }
  return img;
}

SynthImage crop(const SynthImage& img, int row0, int col0, int height, int width) {
  if (row0 < 0 || col0 < 0 || height < 1 || width < 1 || row0 + height > img.height ||
      col0 + width > img.width) {
    throw Error(ErrorCode::BadSize, "crop window outside image");
  }
  SynthImage out;
  out.height = height;
  out.width = width;
  out.kind = img.kind;
  out.id = img.id + "_crop";
  out.pixels.resize(std::size_t(height) * width);
  out.mask.resize(std::size_t(height) * width);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      out.pixels[std::size_t(i) * width + j] = img.at(row0 + i, col0 + j);
      out.mask[std::size_t(i) * width + j] = img.mask[std::size_t(row0 + i) * img.width + col0 + j];
    }
  }
  return out;
}

ForwardTrace forward(const ToyNet& net, const SynthImage& img) {
  check_image(img);
  ForwardTrace t;
  t.conv1 = conv3x3(input_volume(img), net.conv1.data(), kChannels);
  finish_from_conv1(net, t);
  return t;
}

ForwardTrace forward_from_preactivation(const ToyNet& net, std::string_view layer,
                                        const Volume& preactivation, const ForwardTrace& base) {
  ForwardTrace t = base;
  if (parse_layer(layer) == LayerId::conv1_relu) {
    t.conv1 = preactivation;
    finish_from_conv1(net, t);
  } else {
    t.conv2 = preactivation;
    finish_from_conv2(net, t);
  }
  return t;
}

std::array<double, kClasses> logits(const ToyNet& net, const SynthImage& img) {
  return forward(net, img).logits;
}

Volume activation_at_layer(const ToyNet& net, const SynthImage& img, std::string_view layer) {
  const LayerId id = parse_layer(layer);
  ForwardTrace t = forward(net, img);
  return id == LayerId::conv1_relu ? t.relu1 : t.relu2;
}

Volume gradient_at_layer(const ToyNet& net, const SynthImage& img, std::string_view layer,
                         int class_index) {
  const LayerId id = parse_layer(layer);
  check_class(class_index);
  const ForwardTrace t = forward(net, img);

  Volume g_pool2(kChannels, t.pool2.height, t.pool2.width);
  const double area = double(t.pool2.height) * t.pool2.width;
  for (int c = 0; c < kChannels; ++c) {
    const double g = net.head_weight[class_index * kChannels + c] / area;
    for (int i = 0; i < t.pool2.height; ++i) {
      for (int j = 0; j < t.pool2.width; ++j) g_pool2.at(c, i, j) = g;
    }
  }
  Volume g_relu2 = maxpool2_backward(g_pool2, t.pool2_arg, t.relu2);
  mask_dead(g_relu2, t.relu2);
  if (id == LayerId::conv2_relu) return g_relu2;

  Volume g_pool1 = conv3x3_backward(g_relu2, net.conv2.data(), kChannels);
  Volume g_relu1 = maxpool2_backward(g_pool1, t.pool1_arg, t.relu1);
  mask_dead(g_relu1, t.relu1);
  return g_relu1;
}

Volume input_gradient_of_unit(const ToyNet& net, const SynthImage& img, std::string_view layer,
                              int c, int i, int j) {
  const LayerId id = parse_layer(layer);
  const ForwardTrace t = forward(net, img);
  const Volume& act = id == LayerId::conv1_relu ? t.relu1 : t.relu2;
  if (c < 0 || c >= act.channels || i < 0 || i >= act.height || j < 0 || j >= act.width) {
    throw Error(ErrorCode::LocationOutOfRange, "unit outside layer");
  }
  Volume g_relu1;
  if (id == LayerId::conv2_relu) {
    Volume g_relu2(act.channels, act.height, act.width);
    g_relu2.at(c, i, j) = 1.0;
    mask_dead(g_relu2, t.relu2);
    Volume g_pool1 = conv3x3_backward(g_relu2, net.conv2.data(), kChannels);
    g_relu1 = maxpool2_backward(g_pool1, t.pool1_arg, t.relu1);
  } else {
    g_relu1 = Volume(act.channels, act.height, act.width);
    g_relu1.at(c, i, j) = 1.0;
  }
  mask_dead(g_relu1, t.relu1);
  return conv3x3_backward(g_relu1, net.conv1.data(), 1);
}

Tensor3 forward_to_layer(const ToyNet& net, const SynthImage& img, std::string_view layer) {
  TensorMeta meta{std::string(layer), TensorKind::activation, img.id, std::nullopt,
                  source_model_id(net)};
  return to_tensor(activation_at_layer(net, img, layer), std::move(meta));
}

Tensor3 grad_at_layer(const ToyNet& net, const SynthImage& img, std::string_view layer,
                      int class_index) {
  Volume g = gradient_at_layer(net, img, layer, class_index);
  TensorMeta meta{std::string(layer), TensorKind::gradient, img.id, class_index,
                  source_model_id(net)};
  return to_tensor(g, std::move(meta));
}

Tensor3 image_tensor(const SynthImage& img) {
  TensorMeta meta{"input", TensorKind::activation, img.id, std::nullopt, "synthetic"};
  return to_tensor(input_volume(img), std::move(meta));
}

ArchSpec export_toy_arch(const ToyNet& net) {
  ArchSpec arch;
  arch.input_size = {net.input_height, net.input_width};
  arch.layers = {
      {"conv1", LayerKind::conv, {3, 3}, {1, 1}, {1, 1}},
      {"conv1_relu", LayerKind::elementwise, {1, 1}, {1, 1}, {0, 0}},
      {"pool1", LayerKind::pool, {2, 2}, {2, 2}, {0, 0}},
      {"conv2", LayerKind::conv, {3, 3}, {1, 1}, {1, 1}},
      {"conv2_relu", LayerKind::elementwise, {1, 1}, {1, 1}, {0, 0}},
      {"pool2", LayerKind::pool, {2, 2}, {2, 2}, {0, 0}},
  };
  return arch;
}

}  // namespace sacv::toy
