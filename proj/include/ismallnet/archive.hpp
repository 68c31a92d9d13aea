#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ismallnet {

/// One named 32-bit float array stored row-major.
struct NamedArray {
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

/// Flat binary container of named float arrays plus a free-form text manifest.
///
/// Layout (little-endian):
///   "ISNA" | u32 version | u64 manifest_len | manifest bytes | u64 count |
///   count x ( u32 name_len | name | u32 ndim | i64 dims[ndim] | f32 values[] )
/// Arrays are written in name order, so identical content gives identical bytes.
struct Archive {
  std::string manifest;
  std::map<std::string, NamedArray> arrays;
};

void save_archive(const std::filesystem::path& path, const Archive& archive);
Archive load_archive(const std::filesystem::path& path);

}  // namespace ismallnet
