// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "gssl/image.hpp"

namespace gssl::io {

/// Decodes a JPEG; grayscale input is replicated to three channels.
ImageTensor read_jpeg(const std::filesystem::path& path);
void write_jpeg(const std::filesystem::path& path, const ImageTensor& img, int quality = 95);
void write_png(const std::filesystem::path& path, const ImageTensor& img);
/// Single-channel JPEG, used for fixtures.
void write_gray_jpeg(const std::filesystem::path& path, const ImageTensor& img);

}  // namespace gssl::io
