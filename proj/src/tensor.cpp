// SPDX-License-Identifier: Apache-2.0
#include "gssl/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "gssl/errors.hpp"

namespace gssl {

namespace {

std::size_t volume(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(volume(shape_), fill) {}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r ? static_cast<int>(rows.front().size()) : 0;
  Tensor t({r, c});
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[i].size()) != c) throw ShapeError("ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), t.row(i).begin());
  }
  return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(std::vector<int> shape) {
  if (volume(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  shape_ = std::move(shape);
}

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

void require_shape(const Tensor& t, const std::vector<int>& shape, const char* what) {
  if (t.shape() != shape)
    throw ShapeError(std::string(what) + ": expected shape " + shape_string(shape) + ", got " +
                     shape_string(t.shape()));
}

}  // namespace gssl
