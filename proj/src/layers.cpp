// SPDX-License-Identifier: Apache-2.0
#include "gssl/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gssl/errors.hpp"
#include "gssl/rng.hpp"

namespace gssl::nn {

namespace {

void require_rank4(const Tensor& x, const char* what) {
  if (x.rank() != 4) throw ShapeError(std::string(what) + ": expected (B,C,H,W), got " + shape_string(x.shape()));
}

void fill_uniform(Tensor& t, double bound, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

}  // namespace

// ---------------------------------------------------------------------------

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), stride_(stride), pad_(pad) {
  weight_.name = name + ".weight";
  weight_.value = Tensor({out_channels, in_channels, kernel, kernel});
  weight_.grad = Tensor(weight_.value.shape());
}

void Conv2d::init(std::uint64_t seed) {
  const double fan_in = static_cast<double>(in_channels_) * kernel_ * kernel_;
  fill_uniform(weight_.value, std::sqrt(6.0 / fan_in), derive_seed(seed, hash_name(weight_.name)));
}

kernels::ConvShape Conv2d::shape_for(const Tensor& x) const {
  require_rank4(x, weight_.name.c_str());
  if (x.dim(1) != in_channels_)
    throw ShapeError(weight_.name + ": expected " + std::to_string(in_channels_) + " input channels, got " +
                     std::to_string(x.dim(1)));
  kernels::ConvShape s{x.dim(0), in_channels_, x.dim(2), x.dim(3), out_channels_, kernel_, stride_, pad_};
  if (s.out_height() < 1 || s.out_width() < 1) throw ShapeError(weight_.name + ": input too small");
  return s;
}

Tensor Conv2d::forward(const Tensor& x) {
  const auto s = shape_for(x);
  input_ = x;
  Tensor y({s.batch, s.out_channels, s.out_height(), s.out_width()});
  kernels::conv2d_forward(s, x.values(), weight_.value.values(), y.values());
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, bool need_input_grad) {
  const auto s = shape_for(input_);
  kernels::conv2d_backward_weight(s, input_.values(), grad_out.values(), weight_.grad.values());
  if (!need_input_grad) return {};
  Tensor dx(input_.shape());
  kernels::conv2d_backward_input(s, grad_out.values(), weight_.value.values(), dx.values());
  return dx;
}

// ---------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(const std::string& name, int channels) : name_(name), channels_(channels) {
  gamma_ = {name + ".weight", Tensor({channels}, 1.0), Tensor({channels})};
  beta_ = {name + ".bias", Tensor({channels}), Tensor({channels})};
  running_mean_ = Tensor({channels});
  running_var_ = Tensor({channels}, 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  require_rank4(x, name_.c_str());
  if (x.dim(1) != channels_) throw ShapeError(name_ + ": channel mismatch");
  const kernels::BatchNormShape s{x.dim(0), channels_, x.dim(2) * x.dim(3)};
  Tensor y(x.shape());
  if (mode == Mode::Eval) {
    for (int n = 0; n < s.batch; ++n) {
      for (int c = 0; c < channels_; ++c) {
        const double inv = 1.0 / std::sqrt(running_var_[c] + kEps);
        const std::size_t off = (static_cast<std::size_t>(n) * channels_ + c) * s.plane;
        for (int k = 0; k < s.plane; ++k)
          y[off + k] = gamma_.value[c] * (x[off + k] - running_mean_[c]) * inv + beta_.value[c];
      }
    }
    cached_train_ = false;
    return y;
  }
  xhat_ = Tensor(x.shape());
  Tensor mean({channels_}), var({channels_});
  kernels::batchnorm_forward_train(s, x.values(), gamma_.value.values(), beta_.value.values(), kEps, y.values(),
                                   xhat_.values(), mean.values(), var.values());
  inv_std_ = Tensor({channels_});
  const double m = static_cast<double>(s.batch) * s.plane;
  const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
  for (int c = 0; c < channels_; ++c) {
    inv_std_[c] = 1.0 / std::sqrt(var[c] + kEps);
    running_mean_[c] = (1.0 - kMomentum) * running_mean_[c] + kMomentum * mean[c];
    running_var_[c] = (1.0 - kMomentum) * running_var_[c] + kMomentum * var[c] * unbias;
  }
  cached_ = s;
  cached_train_ = true;
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  if (!cached_train_) throw ShapeError(name_ + ": backward requires a training-mode forward");
  Tensor dx(grad_out.shape());
  kernels::batchnorm_backward(cached_, grad_out.values(), xhat_.values(), gamma_.value.values(), inv_std_.values(),
                              dx.values(), gamma_.grad.values(), beta_.grad.values());
  return dx;
}

// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x) {
  output_ = x;
  double* p = output_.data();
  const auto n = static_cast<std::ptrdiff_t>(output_.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::ptrdiff_t i = 0; i < n; ++i) p[i] = p[i] > 0.0 ? p[i] : 0.0;
  return output_;
}

Tensor ReLU::backward(const Tensor& grad_out) const {
  Tensor dx(grad_out.shape());
  const auto n = static_cast<std::ptrdiff_t>(dx.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::ptrdiff_t i = 0; i < n; ++i) dx[i] = output_[i] > 0.0 ? grad_out[i] : 0.0;
  return dx;
}

// ---------------------------------------------------------------------------

Tensor MaxPool2d::forward(const Tensor& x) {
  require_rank4(x, "maxpool");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = (h + 2 * pad_ - kernel_) / stride_ + 1;
  const int ow = (w + 2 * pad_ - kernel_) / stride_ + 1;
  input_shape_ = x.shape();
  Tensor y({b, c, oh, ow});
  argmax_.assign(y.size(), 0);
#pragma omp parallel for schedule(static)
  for (int bc = 0; bc < b * c; ++bc) {
    const std::size_t in_off = static_cast<std::size_t>(bc) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = in_off;
        for (int ky = 0; ky < kernel_; ++ky) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel_; ++kx) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix < 0 || ix >= w) continue;
            const std::size_t idx = in_off + static_cast<std::size_t>(iy) * w + ix;
            if (x[idx] > best) {
              best = x[idx];
              arg = idx;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(bc) * oh + oy) * ow + ox;
        y[o] = best;
        argmax_[o] = arg;
      }
    }
  }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& grad_out) const {
  Tensor dx(input_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) dx[argmax_[o]] += grad_out[o];
  return dx;
}

// ---------------------------------------------------------------------------

Tensor GlobalAvgPool::forward(const Tensor& x) {
  require_rank4(x, "global pool");
  input_shape_ = x.shape();
  const int b = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y({b, c});
  for (int i = 0; i < b * c; ++i) {
    double s = 0.0;
    const double* p = x.data() + static_cast<std::size_t>(i) * plane;
    for (int k = 0; k < plane; ++k) s += p[k];
    y[i] = s / plane;
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) const {
  Tensor dx(input_shape_);
  const int bc = input_shape_[0] * input_shape_[1];
  const int plane = input_shape_[2] * input_shape_[3];
  for (int i = 0; i < bc; ++i) {
    const double g = grad_out[i] / plane;
    double* p = dx.data() + static_cast<std::size_t>(i) * plane;
    for (int k = 0; k < plane; ++k) p[k] = g;
  }
  return dx;
}

// ---------------------------------------------------------------------------

namespace {

struct Cell {
  int r0, r1, c0, c1;
};

Cell cell_of(int k, int n, int h, int w) {
  const int gy = k / n, gx = k % n;
  return {gy * h / n, (gy + 1) * h / n, gx * w / n, (gx + 1) * w / n};
}

}  // namespace

GridAvgPool::GridAvgPool(int cells) : cells_(cells) {
  if (cells < 1) throw DomainError("grid pool needs at least one cell per side");
}

Tensor GridAvgPool::forward(const Tensor& x) {
  require_rank4(x, "grid pool");
  if (x.dim(2) < cells_ || x.dim(3) < cells_)
    throw ShapeError("grid pool needs H, W >= " + std::to_string(cells_));
  input_shape_ = x.shape();
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), n = cells_ * cells_;
  Tensor y({b, n * c});
  for (int i = 0; i < b * c; ++i) {
    const double* p = x.data() + static_cast<std::size_t>(i) * h * w;
    for (int k = 0; k < n; ++k) {
      const Cell r = cell_of(k, cells_, h, w);
      double s = 0.0;
      for (int yy = r.r0; yy < r.r1; ++yy)
        for (int xx = r.c0; xx < r.c1; ++xx) s += p[yy * w + xx];
      y[static_cast<std::size_t>(i) * n + k] = s / ((r.r1 - r.r0) * (r.c1 - r.c0));
    }
  }
  return y;
}

Tensor GridAvgPool::backward(const Tensor& grad_out) const {
  Tensor dx(input_shape_);
  const int bc = input_shape_[0] * input_shape_[1];
  const int h = input_shape_[2], w = input_shape_[3], n = cells_ * cells_;
  for (int i = 0; i < bc; ++i) {
    double* p = dx.data() + static_cast<std::size_t>(i) * h * w;
    for (int k = 0; k < n; ++k) {
      const Cell r = cell_of(k, cells_, h, w);
      const double g = grad_out[static_cast<std::size_t>(i) * n + k] / ((r.r1 - r.r0) * (r.c1 - r.c0));
      for (int yy = r.r0; yy < r.r1; ++yy)
        for (int xx = r.c0; xx < r.c1; ++xx) p[yy * w + xx] = g;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

Linear::Linear(const std::string& name, int in_features, int out_features) : in_(in_features), out_(out_features) {
  weight_ = {name + ".weight", Tensor({in_features, out_features}), Tensor({in_features, out_features})};
  bias_ = {name + ".bias", Tensor({out_features}), Tensor({out_features})};
}

void Linear::init(std::uint64_t seed) {
  fill_uniform(weight_.value, 1.0 / std::sqrt(static_cast<double>(in_)), derive_seed(seed, hash_name(weight_.name)));
  bias_.value.zero();
}

Tensor Linear::forward(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw ShapeError(weight_.name + ": expected (B," + std::to_string(in_) + "), got " + shape_string(x.shape()));
  input_ = x;
  const int b = x.dim(0);
  Tensor y({b, out_});
  for (int i = 0; i < b; ++i) std::copy(bias_.value.values().begin(), bias_.value.values().end(), y.row(i).begin());
  kernels::gemm(kernels::Trans::No, kernels::Trans::No, b, out_, in_, 1.0, x.data(), in_, weight_.value.data(), out_,
                1.0, y.data(), out_);
  return y;
}

Tensor Linear::backward(const Tensor& grad_out, bool need_input_grad) {
  const int b = input_.dim(0);
  require_shape(grad_out, {b, out_}, weight_.name.c_str());
  kernels::gemm(kernels::Trans::Yes, kernels::Trans::No, in_, out_, b, 1.0, input_.data(), in_, grad_out.data(), out_,
                1.0, weight_.grad.data(), out_);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < out_; ++j) bias_.grad[j] += grad_out.at(i, j);
  if (!need_input_grad) return {};
  Tensor dx({b, in_});
  kernels::gemm(kernels::Trans::No, kernels::Trans::Yes, b, in_, out_, 1.0, grad_out.data(), out_,
                weight_.value.data(), out_, 0.0, dx.data(), in_);
  return dx;
}

NormedLinear::NormedLinear(const std::string& name, int in_features, int out_features)
    : in_(in_features), out_(out_features) {
  weight_ = {name + ".weight", Tensor({in_features, out_features}), Tensor({in_features, out_features})};
}

void NormedLinear::init(std::uint64_t seed) {
  fill_uniform(weight_.value, 1.0, derive_seed(seed, hash_name(weight_.name)));
}

namespace {

constexpr double kNormFloor = 1e-12;

}  // namespace

Tensor NormedLinear::forward(const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw ShapeError(weight_.name + ": expected (B," + std::to_string(in_) + "), got " + shape_string(x.shape()));
  const int b = x.dim(0);
  x_hat_ = x;
  x_norm_.assign(static_cast<std::size_t>(b), 0.0);
  for (int i = 0; i < b; ++i) {
    auto row = x_hat_.row(i);
    double ss = 0.0;
    for (double v : row) ss += v * v;
    x_norm_[i] = std::max(std::sqrt(ss), kNormFloor);
    for (double& v : row) v /= x_norm_[i];
  }
  w_hat_ = weight_.value;
  w_norm_.assign(static_cast<std::size_t>(out_), 0.0);
  for (int k = 0; k < out_; ++k) {
    double ss = 0.0;
    for (int d = 0; d < in_; ++d) ss += w_hat_.at(d, k) * w_hat_.at(d, k);
    w_norm_[k] = std::max(std::sqrt(ss), kNormFloor);
    for (int d = 0; d < in_; ++d) w_hat_.at(d, k) /= w_norm_[k];
  }
  Tensor y({b, out_});
  kernels::gemm(kernels::Trans::No, kernels::Trans::No, b, out_, in_, 1.0, x_hat_.data(), in_, w_hat_.data(), out_,
                0.0, y.data(), out_);
  return y;
}

Tensor NormedLinear::backward(const Tensor& grad_out, bool need_input_grad) {
  const int b = x_hat_.dim(0);
  require_shape(grad_out, {b, out_}, weight_.name.c_str());
  Tensor dw_hat({in_, out_});
  kernels::gemm(kernels::Trans::Yes, kernels::Trans::No, in_, out_, b, 1.0, x_hat_.data(), in_, grad_out.data(), out_,
                0.0, dw_hat.data(), out_);
  for (int k = 0; k < out_; ++k) {
    double proj = 0.0;
    for (int d = 0; d < in_; ++d) proj += w_hat_.at(d, k) * dw_hat.at(d, k);
    for (int d = 0; d < in_; ++d)
      weight_.grad.at(d, k) += (dw_hat.at(d, k) - w_hat_.at(d, k) * proj) / w_norm_[k];
  }
  if (!need_input_grad) return {};
  Tensor dx({b, in_});
  kernels::gemm(kernels::Trans::No, kernels::Trans::Yes, b, in_, out_, 1.0, grad_out.data(), out_, w_hat_.data(),
                out_, 0.0, dx.data(), in_);
  for (int i = 0; i < b; ++i) {
    auto row = dx.row(i);
    auto xh = x_hat_.row(i);
    double proj = 0.0;
    for (int d = 0; d < in_; ++d) proj += xh[d] * row[d];
    for (int d = 0; d < in_; ++d) row[d] = (row[d] - xh[d] * proj) / x_norm_[i];
  }
  return dx;
}

}  // namespace gssl::nn
