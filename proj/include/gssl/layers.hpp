// SPDX-License-Identifier: Apache-2.0
#pragma once

// Layers with explicit forward/backward. Each layer caches what its backward
// pass needs from the most recent forward call; backward accumulates
// parameter gradients and returns the gradient with respect to its input.

#include <cstdint>
#include <string>
#include <vector>

#include "gssl/kernels.hpp"
#include "gssl/tensor.hpp"

namespace gssl::nn {

enum class Mode { Train, Eval };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Non-trainable state that must be checkpointed (batch-norm running stats).
struct Buffer {
  std::string name;
  Tensor* tensor;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad);

  /// Kaiming-uniform (fan-in, ReLU gain), seeded from (seed, parameter name).
  void init(std::uint64_t seed);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out, bool need_input_grad = true);
  void collect(std::vector<Parameter*>& out) { out.push_back(&weight_); }

  int out_channels() const noexcept { return out_channels_; }

 private:
  kernels::ConvShape shape_for(const Tensor& x) const;

  int in_channels_ = 0, out_channels_ = 0, kernel_ = 0, stride_ = 1, pad_ = 0;
  Parameter weight_;
  Tensor input_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_out);
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(std::vector<Buffer>& out) {
    out.push_back({name_ + ".running_mean", &running_mean_});
    out.push_back({name_ + ".running_var", &running_var_});
  }

  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

 private:
  std::string name_;
  int channels_ = 0;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor xhat_, inv_std_;
  kernels::BatchNormShape cached_{};
  bool cached_train_ = false;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out) const;

 private:
  Tensor output_;
};

class MaxPool2d {
 public:
  MaxPool2d(int kernel = 3, int stride = 2, int pad = 1) : kernel_(kernel), stride_(stride), pad_(pad) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out) const;

 private:
  int kernel_, stride_, pad_;
  std::vector<int> input_shape_;
  std::vector<std::size_t> argmax_;
};

/// (B,C,H,W) -> (B,C).
class GlobalAvgPool {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out) const;

 private:
  std::vector<int> input_shape_;
};

/// Average over each cell of an n x n grid: (B,C,H,W) -> (B, n*n*C), feature
/// index c*n*n + k with cells row-major. Cell boundaries are floor(i*H/n), so
/// n = 2 matches the quadrant split of the pretext transforms.
class GridAvgPool {
 public:
  explicit GridAvgPool(int cells = 2);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out) const;
  int cells() const noexcept { return cells_; }

 private:
  int cells_;
  std::vector<int> input_shape_;
};

/// Affine head y = x W + b with W stored as (in, out).
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in_features, int out_features);

  /// U(-1/sqrt(in), 1/sqrt(in)) weights, zero bias.
  void init(std::uint64_t seed);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out, bool need_input_grad = true);
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  int in_features() const noexcept { return in_; }
  int out_features() const noexcept { return out_; }
  Parameter& weight() noexcept { return weight_; }
  Parameter& bias() noexcept { return bias_; }
  const Parameter& weight() const noexcept { return weight_; }
  const Parameter& bias() const noexcept { return bias_; }

 private:
  int in_ = 0, out_ = 0;
  Parameter weight_, bias_;
  Tensor input_;
};

/// Cosine classifier: y[i,k] = <x_i / |x_i|, w_k / |w_k|>, no bias.
class NormedLinear {
 public:
  NormedLinear() = default;
  NormedLinear(const std::string& name, int in_features, int out_features);

  /// U(-1, 1) weights.
  void init(std::uint64_t seed);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out, bool need_input_grad = true);
  void collect(std::vector<Parameter*>& out) { out.push_back(&weight_); }

  int in_features() const noexcept { return in_; }
  int out_features() const noexcept { return out_; }
  Parameter& weight() noexcept { return weight_; }
  const Parameter& weight() const noexcept { return weight_; }

 private:
  int in_ = 0, out_ = 0;
  Parameter weight_;
  Tensor x_hat_, w_hat_;
  std::vector<double> x_norm_, w_norm_;
};

}  // namespace gssl::nn
