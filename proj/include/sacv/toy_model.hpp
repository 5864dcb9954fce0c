#pragma once

// A small fixed convolutional network with hand-set filters, exact 64-bit
// backpropagation, and a procedural texture generator. It is the desk-scale
// substrate on which the whole concept-vector pipeline can be checked.
//
//   input 1xHxW -> conv1 (8, 3x3, edge pad 1) -> relu -> maxpool 2x2/2
//               -> conv2 (8, 3x3x8, edge pad 1) -> relu -> maxpool 2x2/2
//               -> global average pool -> affine head (3 classes)

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sacv/receptive_field.hpp"
#include "sacv/tensor_io.hpp"

namespace sacv::toy {

inline constexpr int kChannels = 8;
inline constexpr int kClasses = 3;
inline constexpr std::string_view kShallowLayer = "conv1_relu";
inline constexpr std::string_view kDeepLayer = "conv2_relu";

enum ToyClass : int { kStripedObject = 0, kDottedObject = 1, kPlain = 2 };

// conv1 channel roles
enum Conv1Channel : int {
  kVerticalEdge = 0,
  kHorizontalEdge = 1,
  kDiagonalEdge = 2,
  kAntiDiagonalEdge = 3,
  kCenterSurround = 4,
};

// Dense C x H x W volume in 64-bit, row-major with width fastest.
struct Volume {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Volume() = default;
  Volume(int c, int h, int w) : channels(c), height(h), width(w), data(std::size_t(c) * h * w, 0.0) {}

  std::size_t index(int c, int i, int j) const {
    return (std::size_t(c) * height + i) * width + j;
  }
  double at(int c, int i, int j) const { return data[index(c, i, j)]; }
  double& at(int c, int i, int j) { return data[index(c, i, j)]; }
};

struct ToyNet {
  unsigned seed = 0;
  int input_height = 32;
  int input_width = 32;
  // [out][in][3][3]
  std::array<double, kChannels * 1 * 9> conv1{};
  std::array<double, kChannels * kChannels * 9> conv2{};
  // [class][channel]
  std::array<double, kClasses * kChannels> head_weight{};
  std::array<double, kClasses> head_bias{};

  bool operator==(const ToyNet&) const = default;
};

std::string class_name(int class_index);

ToyNet build_toy_net(unsigned seed);

enum class TextureKind { striped, dotted, plain, noise, composite };

std::string to_string(TextureKind kind);
TextureKind texture_kind_from_string(std::string_view name);

struct SynthImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;       // row-major, values in [0, 1]
  std::vector<std::uint8_t> mask;   // 1 where the concept is present
  TextureKind kind = TextureKind::plain;
  std::string id;

  double at(int i, int j) const { return pixels[std::size_t(i) * width + j]; }
  double& at(int i, int j) { return pixels[std::size_t(i) * width + j]; }
  bool masked(int i, int j) const { return mask[std::size_t(i) * width + j] != 0; }
};

/// Deterministic per (kind, size, period, phase, seed). Striped images are
/// vertical square-wave stripes; composites are striped on the left half and
/// plain on the right, with the mask on the left half.
SynthImage synth_texture(TextureKind kind, int height, int width, int period, int phase,
                         unsigned seed);

/// Crops a rectangular window (used for tight-crop comparisons).
SynthImage crop(const SynthImage& img, int row0, int col0, int height, int width);

/// Everything computed on the way to the logits. `pool*_arg` holds, for
/// every pooled output, the flat index of the routed input.
struct ForwardTrace {
  Volume conv1;  // pre-activation
  Volume relu1;
  Volume pool1;
  std::vector<std::size_t> pool1_arg;
  Volume conv2;  // pre-activation
  Volume relu2;
  Volume pool2;
  std::vector<std::size_t> pool2_arg;
  std::array<double, kChannels> pooled{};
  std::array<double, kClasses> logits{};
};

ForwardTrace forward(const ToyNet& net, const SynthImage& img);

/// Resumes the forward pass from the pre-activation of `layer`
/// ("conv1_relu" or "conv2_relu"), replacing it with `preactivation`.
ForwardTrace forward_from_preactivation(const ToyNet& net, std::string_view layer,
                                        const Volume& preactivation, const ForwardTrace& base);

std::array<double, kClasses> logits(const ToyNet& net, const SynthImage& img);

/// Layer activations in 64-bit.
Volume activation_at_layer(const ToyNet& net, const SynthImage& img, std::string_view layer);

/// Gradient of the pre-softmax class logit with respect to the activations
/// of `layer`. Entries are zero wherever the ReLU output is zero, i.e. this
/// is also the gradient with respect to the layer's pre-activation.
Volume gradient_at_layer(const ToyNet& net, const SynthImage& img, std::string_view layer,
                         int class_index);

/// Gradient of a single activation unit (c, i, j) of `layer` with respect to
/// the input pixels.
Volume input_gradient_of_unit(const ToyNet& net, const SynthImage& img, std::string_view layer,
                              int c, int i, int j);

Tensor3 forward_to_layer(const ToyNet& net, const SynthImage& img, std::string_view layer);
Tensor3 grad_at_layer(const ToyNet& net, const SynthImage& img, std::string_view layer,
                      int class_index);

/// The input image as a 1 x H x W tensor (layer "input").
Tensor3 image_tensor(const SynthImage& img);

ArchSpec export_toy_arch(const ToyNet& net);

std::string source_model_id(const ToyNet& net);

}  // namespace sacv::toy
