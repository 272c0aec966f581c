// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gssl {

/// Three-channel, channel-major image with values in [0,1].
class ImageTensor {
 public:
  static constexpr int kChannels = 3;

  ImageTensor() = default;
  /// Zero image of the given size. Throws DimensionError if H or W < 2.
  ImageTensor(int height, int width);
  /// Takes ownership of channel-major pixel data; validates size and range.
  ImageTensor(int height, int width, std::vector<float> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<const float> pixels() const noexcept { return data_; }
  std::span<float> pixels() noexcept { return data_; }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

}  // namespace gssl
