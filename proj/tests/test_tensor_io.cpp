#include <cstring>
#include <limits>

#include "doctest.h"
#include "sacv/tensor_io.hpp"
#include "support/helpers.hpp"

using namespace sacv;
using sacv::testing::activation_meta;
using sacv::testing::gradient_meta;

namespace {

Tensor3 counting_tensor() {
  Tensor3 t = Tensor3::zeros({2, 2, 2}, activation_meta("toy.conv1", "img0"));
  for (std::size_t k = 0; k < t.data.size(); ++k) t.data[k] = float(k);
  return t;
}

// Offset of the dtype byte in an encoded buffer.
std::size_t dtype_offset(const std::vector<std::uint8_t>& bytes) {
  std::uint32_t meta_len = 0;
  std::memcpy(&meta_len, bytes.data() + 12, 4);
  return 16 + meta_len;
}

}  // namespace

TEST_SUITE("tensor_io") {
  TEST_CASE("2x2x2 counting tensor round-trips bitwise through a file") {
    const auto dir = sacv::testing::scratch_dir("tio-roundtrip");
    const Tensor3 t = counting_tensor();
    write_dump(t, dir / "t.dump");
    const Tensor3 back = read_dump(dir / "t.dump");
    CHECK(back == t);
    CHECK(std::memcmp(back.data.data(), t.data.data(), t.data.size() * 4) == 0);
    CHECK_FALSE(std::filesystem::exists(dir / "t.dump.tmp"));
  }

  TEST_CASE("class_index and source_model survive the round trip") {
    Tensor3 t = Tensor3::zeros({1, 1, 3}, gradient_meta("features.25", "zebra_01", 340));
    const Tensor3 back = decode_dump(encode_dump(t));
    CHECK(back.meta.class_index == std::optional<std::int64_t>(340));
    CHECK(back.meta.source_model == "test");
    CHECK(back.meta.kind == TensorKind::gradient);
  }

  TEST_CASE("NaN entry is rejected on write") {
    Tensor3 t = counting_tensor();
    t.data[3] = std::numeric_limits<float>::quiet_NaN();
    CHECK_ERROR_CODE(encode_dump(t), ErrorCode::InvalidTensor);
  }

  TEST_CASE("data length must match the shape") {
    Tensor3 t = counting_tensor();
    t.data.pop_back();
    CHECK_ERROR_CODE(encode_dump(t), ErrorCode::InvalidTensor);
  }

  TEST_CASE("zero-filled 512x14x14 file size follows the layout") {
    const auto dir = sacv::testing::scratch_dir("tio-size");
    const Tensor3 t = Tensor3::zeros({512, 14, 14}, activation_meta("features.25", "z"));
    write_dump(t, dir / "z.dump");
    const auto bytes = read_bytes(dir / "z.dump");
    std::uint32_t meta_len = 0;
    std::memcpy(&meta_len, bytes.data() + 12, 4);
    CHECK(std::filesystem::file_size(dir / "z.dump") == 8 + 4 + 4 + meta_len + 1 + 1 + 3 * 8 + 512 * 14 * 14 * 4);
  }

  TEST_CASE("header fields are little-endian at fixed offsets") {
    const auto bytes = encode_dump(counting_tensor());
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "SACVDUMP");
    CHECK(bytes[8] == 1);
    CHECK(bytes[9] == 0);
    const std::size_t off = dtype_offset(bytes);
    CHECK(bytes[off] == 1);
    CHECK(bytes[off + 1] == 3);
    CHECK(bytes[off + 2] == 2);  // C = 2, low byte first
  }

  TEST_CASE("file starting with XXXXXXXX is BadMagic") {
    auto bytes = encode_dump(counting_tensor());
    std::memcpy(bytes.data(), "XXXXXXXX", 8);
    CHECK_ERROR_CODE(decode_dump(bytes), ErrorCode::BadMagic);
    CHECK_ERROR_CODE(decode_dump(std::vector<std::uint8_t>{'S', 'A'}), ErrorCode::BadMagic);
  }

  TEST_CASE("header declaring 100 floats with 99 present is TruncatedPayload") {
    Tensor3 t = Tensor3::zeros({1, 10, 10}, activation_meta("l", "i"));
    auto bytes = encode_dump(t);
    bytes.resize(bytes.size() - 4);
    CHECK_ERROR_CODE(decode_dump(bytes), ErrorCode::TruncatedPayload);
  }

  TEST_CASE("absurd dimensions do not overflow into a short read") {
    auto bytes = encode_dump(counting_tensor());
    const std::size_t off = dtype_offset(bytes) + 2;
    for (int b = 0; b < 8; ++b) bytes[off + b] = 0xFF;
    CHECK_ERROR_CODE(decode_dump(bytes), ErrorCode::TruncatedPayload);
  }

  TEST_CASE("unknown version and dtype are named distinctly") {
    auto bytes = encode_dump(counting_tensor());
    auto v2 = bytes;
    v2[8] = 2;
    CHECK_ERROR_CODE(decode_dump(v2), ErrorCode::UnsupportedVersion);
    auto d7 = bytes;
    d7[dtype_offset(bytes)] = 7;
    CHECK_ERROR_CODE(decode_dump(d7), ErrorCode::UnsupportedDtype);
  }

  TEST_CASE("non-finite payload read from disk is NonFiniteData") {
    auto bytes = encode_dump(counting_tensor());
    const float inf = std::numeric_limits<float>::infinity();
    std::memcpy(bytes.data() + bytes.size() - 4, &inf, 4);
    CHECK_ERROR_CODE(decode_dump(bytes), ErrorCode::NonFiniteData);
  }

  TEST_CASE("extra bytes after the payload are TrailingData") {
    auto bytes = encode_dump(counting_tensor());
    bytes.push_back(0);
    CHECK_ERROR_CODE(decode_dump(bytes), ErrorCode::TrailingData);
  }

  TEST_CASE("metadata that is not a JSON object is BadMetadata") {
    auto bytes = encode_dump(counting_tensor());
    bytes[16] = '[';
    CHECK_ERROR_CODE(decode_dump(bytes), ErrorCode::BadMetadata);
  }

  TEST_CASE("missing file is ReadError") {
    CHECK_ERROR_CODE(read_dump("/nonexistent/sacv/file.dump"), ErrorCode::ReadError);
  }

  TEST_CASE("every single-byte corruption yields a typed error or a valid tensor") {
    const auto good = encode_dump(counting_tensor());
    const std::size_t header_end = dtype_offset(good) + 2 + 3 * 8;
    std::mt19937_64 rng(11);
    for (std::size_t pos = 0; pos < header_end; ++pos) {
      for (int trial = 0; trial < 4; ++trial) {
        auto bad = good;
        bad[pos] ^= std::uint8_t(1u << (rng() % 8));
        try {
          const Tensor3 t = decode_dump(bad);
          // Flips inside the JSON text may still parse (e.g. a changed
          // character of a string value); the payload must then be intact.
          CHECK(pos >= 16);
          CHECK(pos < dtype_offset(good));
          CHECK(t.data == counting_tensor().data);
        } catch (const Error&) {
        }
      }
    }
  }

  TEST_CASE("validate_pair accepts a matching pair and names the mismatching field") {
    const Tensor3 a = Tensor3::zeros({64, 8, 8}, activation_meta("toy.conv1", "x"));
    const Tensor3 g = Tensor3::zeros({64, 8, 8}, gradient_meta("toy.conv1", "x", 0));
    CHECK_NOTHROW(validate_pair(a, g));

    const Tensor3 small = Tensor3::zeros({64, 4, 4}, gradient_meta("toy.conv1", "x", 0));
    try {
      validate_pair(a, small);
      FAIL("expected PairMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::PairMismatch);
      CHECK(std::string(e.what()).find("shape") != std::string::npos);
    }

    const Tensor3 other_layer = Tensor3::zeros({64, 8, 8}, gradient_meta("toy.conv2", "x", 0));
    try {
      validate_pair(a, other_layer);
      FAIL("expected PairMismatch");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("layer") != std::string::npos);
    }

    const Tensor3 other_image = Tensor3::zeros({64, 8, 8}, gradient_meta("toy.conv1", "y", 0));
    CHECK_ERROR_CODE(validate_pair(a, other_image), ErrorCode::PairMismatch);
    CHECK_ERROR_CODE(validate_pair(g, a), ErrorCode::PairMismatch);
  }

  TEST_CASE("f64 records keep doubles exactly") {
    DumpRecord r;
    r.meta = {{"kind", "sacv"}};
    r.dtype = Dtype::float64;
    r.dims = {3};
    r.f64 = {0.1, -1e300, 3.0};
    const DumpRecord back = decode_record(encode_record(r));
    CHECK(back.f64 == r.f64);
    CHECK(back.dims == r.dims);
  }
}
