#pragma once

// SACVDUMP container: the binary interchange format for activation and
// gradient tensors, trained concept vectors, and explanation maps.
//
// Layout (version 1, integers little-endian):
//   "SACVDUMP" | u32 version | u32 meta_len | meta_len bytes of JSON |
//   u8 dtype | u8 ndim | ndim x u64 dims | payload (row-major, last dim fastest)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace sacv {

inline constexpr std::uint32_t kDumpVersion = 1;

enum class Dtype : std::uint8_t { float32 = 1, float64 = 2 };

enum class TensorKind { activation, gradient };

std::string to_string(TensorKind kind);

struct TensorMeta {
  std::string layer;
  TensorKind kind = TensorKind::activation;
  std::string image_id;
  std::optional<std::int64_t> class_index;
  std::string source_model;

  bool operator==(const TensorMeta&) const = default;
};

struct Shape3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const Shape3&) const = default;
};

/// A C x H x W float tensor (feature map or gradient map) with its layer
/// metadata. Data is row-major with width fastest.
struct Tensor3 {
  Shape3 shape;
  std::vector<float> data;
  TensorMeta meta;

  static Tensor3 zeros(Shape3 shape, TensorMeta meta);

  std::size_t index(std::size_t c, std::size_t i, std::size_t j) const {
    return (c * shape.height + i) * shape.width + j;
  }
  float at(std::size_t c, std::size_t i, std::size_t j) const { return data[index(c, i, j)]; }
  float& at(std::size_t c, std::size_t i, std::size_t j) { return data[index(c, i, j)]; }

  bool operator==(const Tensor3&) const = default;
};

/// Throws InvalidTensor if shape, data length, finiteness, or metadata
/// invariants do not hold.
void check_tensor(const Tensor3& t);

/// Untyped view of one container: what every typed reader decodes first.
struct DumpRecord {
  nlohmann::json meta;
  Dtype dtype = Dtype::float32;
  std::vector<std::uint64_t> dims;
  std::vector<float> f32;   // populated when dtype == float32
  std::vector<double> f64;  // populated when dtype == float64

  std::size_t element_count() const;
};

std::vector<std::uint8_t> encode_record(const DumpRecord& record);
DumpRecord decode_record(std::span<const std::uint8_t> bytes);

/// Writes through a temporary sibling file and renames, so readers never see
/// a partial file.
void write_bytes_atomic(const std::filesystem::path& destination,
                        std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& source);

void write_record(const DumpRecord& record, const std::filesystem::path& destination);
DumpRecord read_record(const std::filesystem::path& source);

std::vector<std::uint8_t> encode_dump(const Tensor3& t);
Tensor3 decode_dump(std::span<const std::uint8_t> bytes);

void write_dump(const Tensor3& t, const std::filesystem::path& destination);
Tensor3 read_dump(const std::filesystem::path& source);

/// Succeeds iff both maps describe the same layer and image with equal
/// shapes, and the kinds are activation/gradient respectively. Throws
/// PairMismatch naming the offending field otherwise.
void validate_pair(const Tensor3& activation, const Tensor3& gradient);

}  // namespace sacv
