// SPDX-License-Identifier: Apache-2.0
#pragma once

// Single-file tensor archive:
//
//   "GSSLCKPT"  u32 version  u64 manifest_bytes  <manifest JSON>
//   u64 tensor_count, then per tensor:
//   u32 name_bytes <name>  u32 rank  i64 dims[rank]  f64 values[]
//
// All integers and floats little-endian.

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "gssl/tensor.hpp"

namespace gssl::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

struct Archive {
  nlohmann::json manifest;
  std::map<std::string, Tensor> tensors;
};

/// Writes to a temporary sibling and renames, so a crash never leaves a
/// truncated archive under the final name.
void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

}  // namespace gssl::ckpt
