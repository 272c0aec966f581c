// SPDX-License-Identifier: Apache-2.0
#include "gssl/image.hpp"

#include <string>

#include "gssl/errors.hpp"

namespace gssl {

namespace {

void check_dims(int h, int w) {
  if (h < 2 || w < 2)
    throw DimensionError("image must be at least 2x2, got " + std::to_string(h) + "x" + std::to_string(w));
}

}  // namespace

ImageTensor::ImageTensor(int height, int width) : height_(height), width_(width) {
  check_dims(height, width);
  data_.assign(static_cast<std::size_t>(kChannels) * height * width, 0.0f);
}

ImageTensor::ImageTensor(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  check_dims(height, width);
  if (data_.size() != static_cast<std::size_t>(kChannels) * height * width)
    throw ShapeError("pixel buffer of " + std::to_string(data_.size()) + " values does not match 3x" +
                     std::to_string(height) + "x" + std::to_string(width));
  for (float v : data_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DomainError("pixel value outside [0,1]: " + std::to_string(v));
  }
}

}  // namespace gssl
