#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "sacv/error.hpp"
#include "sacv/tensor_io.hpp"

namespace sacv::testing {

/// Runs `fn` and returns the ErrorCode it throws; fails the test if it
/// throws nothing or something other than sacv::Error.
template <typename Fn>
ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  } catch (const std::exception& e) {
    FAIL("untyped exception: " << e.what());
  }
  FAIL("no exception thrown");
  return ErrorCode::WriteError;
}

#define CHECK_ERROR_CODE(expr, expected) CHECK(::sacv::testing::error_code_of([&] { (void)(expr); }) == (expected))

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sacv-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Tensor3 random_tensor(std::mt19937_64& rng, Shape3 shape, TensorMeta meta) {
  std::uniform_real_distribution<float> u(-3.0f, 3.0f);
  Tensor3 t = Tensor3::zeros(shape, std::move(meta));
  for (auto& x : t.data) x = u(rng);
  return t;
}

inline TensorMeta activation_meta(const std::string& layer, const std::string& image_id) {
  TensorMeta m;
  m.layer = layer;
  m.kind = TensorKind::activation;
  m.image_id = image_id;
  m.source_model = "test";
  return m;
}

inline TensorMeta gradient_meta(const std::string& layer, const std::string& image_id, std::int64_t cls) {
  TensorMeta m = activation_meta(layer, image_id);
  m.kind = TensorKind::gradient;
  m.class_index = cls;
  return m;
}

}  // namespace sacv::testing
