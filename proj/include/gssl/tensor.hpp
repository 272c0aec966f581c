// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gssl {

/// Dense row-major double tensor with value semantics.
///
/// Used for network activations, parameters and gradients. Rank-2 tensors
/// double as matrices (rows = batch) for logits and gate outputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::initializer_list<int> shape, double fill = 0.0)
      : Tensor(std::vector<int>(shape), fill) {}

  /// Rank-2 tensor from nested rows; all rows must have equal length.
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-2 access.
  int rows() const { return dim(0); }
  int cols() const { return dim(1); }
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  std::span<double> row(int r) {
    return {data_.data() + static_cast<std::size_t>(r) * shape_[1], static_cast<std::size_t>(shape_[1])};
  }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * shape_[1], static_cast<std::size_t>(shape_[1])};
  }

  void fill(double v);
  void zero() { fill(0.0); }
  void reshape(std::vector<int> shape);
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<int>& shape);

/// Throws ShapeError with `what` in the message when shapes differ.
void require_shape(const Tensor& t, const std::vector<int>& shape, const char* what);

}  // namespace gssl
