// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense compute kernels behind the network layers.
//
// The functions in gssl::kernels are the OpenMP versions used for training.
// Each output element is owned by one thread and summed in a fixed order, so
// results do not depend on the thread count. gssl::kernels::reference holds
// serial versions used by tests and the benchmark.

#include <span>

namespace gssl::kernels {

enum class Trans { No, Yes };

/// C(m x n) = alpha * op(A)(m x k) * op(B)(k x n) + beta * C, row-major.
void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc);

struct ConvShape {
  int batch = 1;
  int in_channels = 1;
  int height = 1;
  int width = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_height() const noexcept { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const noexcept { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t input_size() const noexcept {
    return static_cast<std::size_t>(batch) * in_channels * height * width;
  }
  std::size_t output_size() const noexcept {
    return static_cast<std::size_t>(batch) * out_channels * out_height() * out_width();
  }
  std::size_t weight_size() const noexcept {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

/// Cross-correlation without bias; weight layout (Cout, Cin, k, k).
void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output);
/// Overwrites grad_input.
void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_output, std::span<const double> weight,
                           std::span<double> grad_input);
/// Accumulates into grad_weight.
void conv2d_backward_weight(const ConvShape& s, std::span<const double> input, std::span<const double> grad_output,
                            std::span<double> grad_weight);

struct BatchNormShape {
  int batch = 1;
  int channels = 1;
  int plane = 1;  // H * W
};

/// Training-mode batch norm. Writes y, the normalized activations, the batch
/// mean and the biased batch variance per channel.
void batchnorm_forward_train(const BatchNormShape& s, std::span<const double> x, std::span<const double> gamma,
                             std::span<const double> beta, double eps, std::span<double> y, std::span<double> xhat,
                             std::span<double> mean, std::span<double> var);
/// Overwrites grad_x; accumulates grad_gamma and grad_beta.
void batchnorm_backward(const BatchNormShape& s, std::span<const double> grad_y, std::span<const double> xhat,
                        std::span<const double> gamma, std::span<const double> inv_std, std::span<double> grad_x,
                        std::span<double> grad_gamma, std::span<double> grad_beta);

namespace reference {

void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc);
void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output);
void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_output, std::span<const double> weight,
                           std::span<double> grad_input);
void conv2d_backward_weight(const ConvShape& s, std::span<const double> input, std::span<const double> grad_output,
                            std::span<double> grad_weight);
void batchnorm_forward_train(const BatchNormShape& s, std::span<const double> x, std::span<const double> gamma,
                             std::span<const double> beta, double eps, std::span<double> y, std::span<double> xhat,
                             std::span<double> mean, std::span<double> var);
void batchnorm_backward(const BatchNormShape& s, std::span<const double> grad_y, std::span<const double> xhat,
                        std::span<const double> gamma, std::span<const double> inv_std, std::span<double> grad_x,
                        std::span<double> grad_gamma, std::span<double> grad_beta);

}  // namespace reference

}  // namespace gssl::kernels
