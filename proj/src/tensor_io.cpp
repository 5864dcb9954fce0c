#include "sacv/tensor_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "sacv/error.hpp"

namespace sacv {
namespace {

constexpr char kMagic[8] = {'S', 'A', 'C', 'V', 'D', 'U', 'M', 'P'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(value) >> (8 * b)) & 0xFFu));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  template <typename T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    std::uint64_t value = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      value |= static_cast<std::uint64_t>(bytes_[pos_ + b]) << (8 * b);
    }
    pos_ += sizeof(T);
    return static_cast<T>(value);
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw Error(ErrorCode::TruncatedPayload,
                  std::string("file ends inside ") + what);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t dtype_width(Dtype dtype) { return dtype == Dtype::float32 ? 4 : 8; }

nlohmann::json tensor_meta_json(const TensorMeta& meta) {
  nlohmann::json j;
  j["layer"] = meta.layer;
  j["kind"] = to_string(meta.kind);
  j["image_id"] = meta.image_id;
  j["class_index"] = meta.class_index ? nlohmann::json(*meta.class_index) : nlohmann::json(nullptr);
  j["source_model"] = meta.source_model;
  return j;
}

TensorMeta tensor_meta_from_json(const nlohmann::json& j) {
  auto string_field = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw Error(ErrorCode::BadMetadata, std::string("missing string field '") + key + "'");
    }
    return j[key].get<std::string>();
  };
  TensorMeta meta;
  meta.layer = string_field("layer");
  const std::string kind = string_field("kind");
  if (kind == "activation") {
    meta.kind = TensorKind::activation;
  } else if (kind == "gradient") {
    meta.kind = TensorKind::gradient;
  } else {
    throw Error(ErrorCode::BadMetadata, "tensor kind must be activation or gradient, got '" + kind + "'");
  }
  meta.image_id = string_field("image_id");
  meta.source_model = string_field("source_model");
  if (!j.contains("class_index")) {
    throw Error(ErrorCode::BadMetadata, "missing field 'class_index'");
  }
  const auto& ci = j["class_index"];
  if (ci.is_number_integer()) {
    if (ci.get<std::int64_t>() < 0) {
      throw Error(ErrorCode::BadMetadata, "class_index must be non-negative");
    }
    meta.class_index = ci.get<std::int64_t>();
  } else if (!ci.is_null()) {
    throw Error(ErrorCode::BadMetadata, "class_index must be an integer or null");
  }
  if (meta.layer.empty()) throw Error(ErrorCode::BadMetadata, "layer name is empty");
  if (meta.kind == TensorKind::gradient && !meta.class_index) {
    throw Error(ErrorCode::BadMetadata, "gradient tensor without class_index");
  }
  return meta;
}

}  // namespace

std::string to_string(TensorKind kind) {
  return kind == TensorKind::activation ? "activation" : "gradient";
}

Tensor3 Tensor3::zeros(Shape3 shape, TensorMeta meta) {
  Tensor3 t;
  t.shape = shape;
  t.data.assign(shape.size(), 0.0f);
  t.meta = std::move(meta);
  return t;
}

void check_tensor(const Tensor3& t) {
  if (t.shape.channels == 0 || t.shape.height == 0 || t.shape.width == 0) {
    throw Error(ErrorCode::InvalidTensor, "all dimensions must be >= 1");
  }
  if (t.data.size() != t.shape.size()) {
    throw Error(ErrorCode::InvalidTensor, "data length " + std::to_string(t.data.size()) +
                                              " does not match shape product " +
                                              std::to_string(t.shape.size()));
  }
  for (float v : t.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidTensor, "non-finite entry");
  }
  if (t.meta.layer.empty()) throw Error(ErrorCode::InvalidTensor, "layer name is empty");
  if (t.meta.kind == TensorKind::gradient && !t.meta.class_index) {
    throw Error(ErrorCode::InvalidTensor, "gradient tensor without class_index");
  }
  if (t.meta.class_index && *t.meta.class_index < 0) {
    throw Error(ErrorCode::InvalidTensor, "negative class_index");
  }
}

std::size_t DumpRecord::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<std::uint8_t> encode_record(const DumpRecord& record) {
  const std::string meta = record.meta.dump();
  const std::size_t n = record.element_count();
  const std::size_t have = record.dtype == Dtype::float32 ? record.f32.size() : record.f64.size();
  if (have != n) {
    throw Error(ErrorCode::InvalidTensor, "payload length does not match dims");
  }
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 + 4 + meta.size() + 2 + 8 * record.dims.size() + n * dtype_width(record.dtype));
  out.insert(out.end(), kMagic, kMagic + 8);
  put_le<std::uint32_t>(out, kDumpVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  out.push_back(static_cast<std::uint8_t>(record.dtype));
  out.push_back(static_cast<std::uint8_t>(record.dims.size()));
  for (auto d : record.dims) put_le<std::uint64_t>(out, d);
  if (record.dtype == Dtype::float32) {
    for (float v : record.f32) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_le(out, bits);
    }
  } else {
    for (double v : record.f64) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put_le(out, bits);
    }
  }
  return out;
}

DumpRecord decode_record(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw Error(ErrorCode::BadMagic, "file does not start with SACVDUMP");
  }
  in.take(8, "magic");
  const auto version = in.get_le<std::uint32_t>("version");
  if (version != kDumpVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "version " + std::to_string(version));
  }
  const auto meta_len = in.get_le<std::uint32_t>("metadata length");
  auto meta_bytes = in.take(meta_len, "metadata");

  DumpRecord record;
  record.meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end(), nullptr, false);
  if (record.meta.is_discarded() || !record.meta.is_object()) {
    throw Error(ErrorCode::BadMetadata, "metadata is not a JSON object");
  }

  const auto dtype = in.get_le<std::uint8_t>("dtype");
  if (dtype != static_cast<std::uint8_t>(Dtype::float32) &&
      dtype != static_cast<std::uint8_t>(Dtype::float64)) {
    throw Error(ErrorCode::UnsupportedDtype, "dtype code " + std::to_string(dtype));
  }
  record.dtype = static_cast<Dtype>(dtype);
  const auto ndim = in.get_le<std::uint8_t>("ndim");
  if (ndim == 0) throw Error(ErrorCode::BadMetadata, "ndim must be >= 1");

  const std::size_t width = dtype_width(record.dtype);
  std::size_t count = 1;
  for (std::uint8_t d = 0; d < ndim; ++d) {
    const auto dim = in.get_le<std::uint64_t>("dimensions");
    if (dim == 0) throw Error(ErrorCode::BadMetadata, "zero-sized dimension");
    record.dims.push_back(dim);
  }
  for (auto dim : record.dims) {
    // Any product that exceeds the bytes left is truncated, so clamp there
    // instead of risking overflow.
    if (dim > in.remaining() || count > in.remaining() / dim) {
      throw Error(ErrorCode::TruncatedPayload, "declared payload exceeds file size");
    }
    count *= static_cast<std::size_t>(dim);
  }
  if (count > in.remaining() / width) {
    throw Error(ErrorCode::TruncatedPayload,
                "declared " + std::to_string(count) + " elements, file holds " +
                    std::to_string(in.remaining() / width));
  }
  auto payload = in.take(count * width, "payload");
  if (in.remaining() != 0) {
    throw Error(ErrorCode::TrailingData, std::to_string(in.remaining()) + " bytes after payload");
  }

  Reader body(payload);
  if (record.dtype == Dtype::float32) {
    record.f32.resize(count);
    for (auto& v : record.f32) {
      const auto bits = body.get_le<std::uint32_t>("payload");
      std::memcpy(&v, &bits, 4);
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteData, "payload holds NaN or Inf");
    }
  } else {
    record.f64.resize(count);
    for (auto& v : record.f64) {
      const auto bits = body.get_le<std::uint64_t>("payload");
      std::memcpy(&v, &bits, 8);
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteData, "payload holds NaN or Inf");
    }
  }
  return record;
}

void write_bytes_atomic(const std::filesystem::path& destination,
                        std::span<const std::uint8_t> bytes) {
  auto tmp = destination;
  tmp += ".tmp";
  if (destination.has_parent_path()) {
    std::error_code dir_ec;
    std::filesystem::create_directories(destination.parent_path(), dir_ec);
  }
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::WriteError, "cannot open " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::WriteError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, destination, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::WriteError, "cannot rename into " + destination.string());
  }
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorCode::ReadError, "cannot open " + source.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_record(const DumpRecord& record, const std::filesystem::path& destination) {
  write_bytes_atomic(destination, encode_record(record));
}

DumpRecord read_record(const std::filesystem::path& source) {
  return decode_record(read_bytes(source));
}

std::vector<std::uint8_t> encode_dump(const Tensor3& t) {
  check_tensor(t);
  DumpRecord record;
  record.meta = tensor_meta_json(t.meta);
  record.dtype = Dtype::float32;
  record.dims = {t.shape.channels, t.shape.height, t.shape.width};
  record.f32 = t.data;
  return encode_record(record);
}

Tensor3 decode_dump(std::span<const std::uint8_t> bytes) {
  DumpRecord record = decode_record(bytes);
  if (record.dtype != Dtype::float32) {
    throw Error(ErrorCode::UnsupportedDtype, "tensor dumps must hold float32");
  }
  if (record.dims.size() != 3) {
    throw Error(ErrorCode::BadMetadata, "tensor dumps must have ndim 3, got " +
                                            std::to_string(record.dims.size()));
  }
  Tensor3 t;
  t.meta = tensor_meta_from_json(record.meta);
  t.shape = {record.dims[0], record.dims[1], record.dims[2]};
  t.data = std::move(record.f32);
  return t;
}

void write_dump(const Tensor3& t, const std::filesystem::path& destination) {
  write_bytes_atomic(destination, encode_dump(t));
}

Tensor3 read_dump(const std::filesystem::path& source) {
  return decode_dump(read_bytes(source));
}

void validate_pair(const Tensor3& activation, const Tensor3& gradient) {
  auto fail = [](const std::string& field, const std::string& detail) {
    throw Error(ErrorCode::PairMismatch, field + ": " + detail);
  };
  if (activation.meta.kind != TensorKind::activation) fail("kind", "first tensor is not an activation");
  if (gradient.meta.kind != TensorKind::gradient) fail("kind", "second tensor is not a gradient");
  if (!(activation.shape == gradient.shape)) {
    auto str = [](const Shape3& s) {
      return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
    };
    fail("shape", str(activation.shape) + " vs " + str(gradient.shape));
  }
  if (activation.meta.layer != gradient.meta.layer) {
    fail("layer", "'" + activation.meta.layer + "' vs '" + gradient.meta.layer + "'");
  }
  if (activation.meta.image_id != gradient.meta.image_id) {
    fail("image_id", "'" + activation.meta.image_id + "' vs '" + gradient.meta.image_id + "'");
  }
}

}  // namespace sacv
