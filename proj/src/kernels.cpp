// SPDX-License-Identifier: Apache-2.0
#include "gssl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gssl/errors.hpp"

namespace gssl::kernels {

namespace {

void check_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(want) + " values, got " + std::to_string(got));
}

// Computes rows [row_begin, row_end) of C. Each row is owned by the caller.
void gemm_rows(Trans ta, Trans tb, int row_begin, int row_end, int n, int k, double alpha, const double* a, int lda,
               const double* b, int ldb, double beta, double* c, int ldc) {
  for (int i = row_begin; i < row_end; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * ldc;
    if (beta == 0.0) {
      std::fill(crow, crow + n, 0.0);
    } else if (beta != 1.0) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    if (tb == Trans::No) {
      for (int p = 0; p < k; ++p) {
        const double av = alpha * (ta == Trans::No ? a[static_cast<std::size_t>(i) * lda + p]
                                                   : a[static_cast<std::size_t>(p) * lda + i]);
        const double* brow = b + static_cast<std::size_t>(p) * ldb;
#pragma omp simd
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (int j = 0; j < n; ++j) {
        const double* brow = b + static_cast<std::size_t>(j) * ldb;
        double acc = 0.0;
        if (ta == Trans::No) {
          const double* arow = a + static_cast<std::size_t>(i) * lda;
#pragma omp simd reduction(+ : acc)
          for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
        } else {
          for (int p = 0; p < k; ++p) acc += a[static_cast<std::size_t>(p) * lda + i] * brow[p];
        }
        crow[j] += alpha * acc;
      }
    }
  }
}

void im2col(const ConvShape& s, const double* img, double* col) {
  const int oh = s.out_height(), ow = s.out_width();
  const int plane = oh * ow;
  for (int ci = 0; ci < s.in_channels; ++ci) {
    const double* src = img + static_cast<std::size_t>(ci) * s.height * s.width;
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx) {
        double* dst = col + (static_cast<std::size_t>(ci) * s.kernel * s.kernel + ky * s.kernel + kx) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.height) {
            std::fill(dst + oy * ow, dst + (oy + 1) * ow, 0.0);
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            dst[oy * ow + ox] = (ix >= 0 && ix < s.width) ? src[iy * s.width + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvShape& s, const double* col, double* img) {
  const int oh = s.out_height(), ow = s.out_width();
  const int plane = oh * ow;
  std::fill(img, img + static_cast<std::size_t>(s.in_channels) * s.height * s.width, 0.0);
  for (int ci = 0; ci < s.in_channels; ++ci) {
    double* dst = img + static_cast<std::size_t>(ci) * s.height * s.width;
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx) {
        const double* src = col + (static_cast<std::size_t>(ci) * s.kernel * s.kernel + ky * s.kernel + kx) * plane;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix >= 0 && ix < s.width) dst[iy * s.width + ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

// Samples per partial weight gradient. Fixed, so the summation order does not
// depend on how many threads run.
constexpr int kWeightGradChunk = 4;

}  // namespace

void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
  const double work = static_cast<double>(m) * n * k;
#pragma omp parallel for schedule(static) if (work > 32768.0)
  for (int i = 0; i < m; ++i) gemm_rows(ta, tb, i, i + 1, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output) {
  check_size(input.size(), s.input_size(), "conv2d input");
  check_size(weight.size(), s.weight_size(), "conv2d weight");
  check_size(output.size(), s.output_size(), "conv2d output");
  const int plane = s.out_height() * s.out_width();
  const int ck = s.in_channels * s.kernel * s.kernel;
  const std::size_t in_vol = static_cast<std::size_t>(s.in_channels) * s.height * s.width;
  const std::size_t out_vol = static_cast<std::size_t>(s.out_channels) * plane;
#pragma omp parallel
  {
    std::vector<double> col(static_cast<std::size_t>(ck) * plane);
#pragma omp for schedule(static)
    for (int nb = 0; nb < s.batch; ++nb) {
      im2col(s, input.data() + nb * in_vol, col.data());
      gemm_rows(Trans::No, Trans::No, 0, s.out_channels, plane, ck, 1.0, weight.data(), ck, col.data(), plane, 0.0,
                output.data() + nb * out_vol, plane);
    }
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_output, std::span<const double> weight,
                           std::span<double> grad_input) {
  check_size(grad_output.size(), s.output_size(), "conv2d grad_output");
  check_size(weight.size(), s.weight_size(), "conv2d weight");
  check_size(grad_input.size(), s.input_size(), "conv2d grad_input");
  const int plane = s.out_height() * s.out_width();
  const int ck = s.in_channels * s.kernel * s.kernel;
  const std::size_t in_vol = static_cast<std::size_t>(s.in_channels) * s.height * s.width;
  const std::size_t out_vol = static_cast<std::size_t>(s.out_channels) * plane;
#pragma omp parallel
  {
    std::vector<double> col(static_cast<std::size_t>(ck) * plane);
#pragma omp for schedule(static)
    for (int nb = 0; nb < s.batch; ++nb) {
      gemm_rows(Trans::Yes, Trans::No, 0, ck, plane, s.out_channels, 1.0, weight.data(), ck,
                grad_output.data() + nb * out_vol, plane, 0.0, col.data(), plane);
      col2im(s, col.data(), grad_input.data() + nb * in_vol);
    }
  }
}

void conv2d_backward_weight(const ConvShape& s, std::span<const double> input, std::span<const double> grad_output,
                            std::span<double> grad_weight) {
  check_size(input.size(), s.input_size(), "conv2d input");
  check_size(grad_output.size(), s.output_size(), "conv2d grad_output");
  check_size(grad_weight.size(), s.weight_size(), "conv2d grad_weight");
  const int plane = s.out_height() * s.out_width();
  const int ck = s.in_channels * s.kernel * s.kernel;
  const std::size_t in_vol = static_cast<std::size_t>(s.in_channels) * s.height * s.width;
  const std::size_t out_vol = static_cast<std::size_t>(s.out_channels) * plane;
  const int chunks = (s.batch + kWeightGradChunk - 1) / kWeightGradChunk;
  const std::size_t wsize = s.weight_size();
  std::vector<double> partial(static_cast<std::size_t>(chunks) * wsize, 0.0);
#pragma omp parallel
  {
    std::vector<double> col(static_cast<std::size_t>(ck) * plane);
#pragma omp for schedule(static)
    for (int chunk = 0; chunk < chunks; ++chunk) {
      double* dst = partial.data() + chunk * wsize;
      const int end = std::min(s.batch, (chunk + 1) * kWeightGradChunk);
      for (int nb = chunk * kWeightGradChunk; nb < end; ++nb) {
        im2col(s, input.data() + nb * in_vol, col.data());
        gemm_rows(Trans::No, Trans::Yes, 0, s.out_channels, ck, plane, 1.0, grad_output.data() + nb * out_vol, plane,
                  col.data(), plane, 1.0, dst, ck);
      }
    }
  }
  for (int chunk = 0; chunk < chunks; ++chunk) {
    const double* src = partial.data() + chunk * wsize;
    for (std::size_t i = 0; i < wsize; ++i) grad_weight[i] += src[i];
  }
}

void batchnorm_forward_train(const BatchNormShape& s, std::span<const double> x, std::span<const double> gamma,
                             std::span<const double> beta, double eps, std::span<double> y, std::span<double> xhat,
                             std::span<double> mean, std::span<double> var) {
  const std::size_t total = static_cast<std::size_t>(s.batch) * s.channels * s.plane;
  check_size(x.size(), total, "batchnorm input");
  check_size(y.size(), total, "batchnorm output");
  check_size(xhat.size(), total, "batchnorm xhat");
  const double m = static_cast<double>(s.batch) * s.plane;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < s.channels; ++c) {
    double sum = 0.0;
    for (int n = 0; n < s.batch; ++n) {
      const double* p = x.data() + (static_cast<std::size_t>(n) * s.channels + c) * s.plane;
      for (int k = 0; k < s.plane; ++k) sum += p[k];
    }
    const double mu = sum / m;
    double sq = 0.0;
    for (int n = 0; n < s.batch; ++n) {
      const double* p = x.data() + (static_cast<std::size_t>(n) * s.channels + c) * s.plane;
      for (int k = 0; k < s.plane; ++k) sq += (p[k] - mu) * (p[k] - mu);
    }
    const double v = sq / m;
    const double inv = 1.0 / std::sqrt(v + eps);
    for (int n = 0; n < s.batch; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.channels + c) * s.plane;
      for (int k = 0; k < s.plane; ++k) {
        const double h = (x[off + k] - mu) * inv;
        xhat[off + k] = h;
        y[off + k] = gamma[c] * h + beta[c];
      }
    }
    mean[c] = mu;
    var[c] = v;
  }
}

void batchnorm_backward(const BatchNormShape& s, std::span<const double> grad_y, std::span<const double> xhat,
                        std::span<const double> gamma, std::span<const double> inv_std, std::span<double> grad_x,
                        std::span<double> grad_gamma, std::span<double> grad_beta) {
  const std::size_t total = static_cast<std::size_t>(s.batch) * s.channels * s.plane;
  check_size(grad_y.size(), total, "batchnorm grad_y");
  check_size(grad_x.size(), total, "batchnorm grad_x");
  const double m = static_cast<double>(s.batch) * s.plane;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < s.channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < s.batch; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.channels + c) * s.plane;
      for (int k = 0; k < s.plane; ++k) {
        sum_dy += grad_y[off + k];
        sum_dy_xhat += grad_y[off + k] * xhat[off + k];
      }
    }
    grad_gamma[c] += sum_dy_xhat;
    grad_beta[c] += sum_dy;
    const double scale = gamma[c] * inv_std[c] / m;
    for (int n = 0; n < s.batch; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.channels + c) * s.plane;
      for (int k = 0; k < s.plane; ++k)
        grad_x[off + k] = scale * (m * grad_y[off + k] - sum_dy - xhat[off + k] * sum_dy_xhat);
    }
  }
}

// ---------------------------------------------------------------------------

namespace reference {

void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = ta == Trans::No ? a[i * lda + p] : a[p * lda + i];
        const double bv = tb == Trans::No ? b[p * ldb + j] : b[j * ldb + p];
        acc += av * bv;
      }
      c[i * ldc + j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * c[i * ldc + j]);
    }
  }
}

namespace {

std::size_t in_index(const ConvShape& s, int n, int c, int y, int x) {
  return ((static_cast<std::size_t>(n) * s.in_channels + c) * s.height + y) * s.width + x;
}
std::size_t out_index(const ConvShape& s, int n, int c, int y, int x) {
  return ((static_cast<std::size_t>(n) * s.out_channels + c) * s.out_height() + y) * s.out_width() + x;
}
std::size_t w_index(const ConvShape& s, int co, int ci, int ky, int kx) {
  return ((static_cast<std::size_t>(co) * s.in_channels + ci) * s.kernel + ky) * s.kernel + kx;
}

}  // namespace

void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output) {
  check_size(input.size(), s.input_size(), "conv2d input");
  check_size(output.size(), s.output_size(), "conv2d output");
  for (int n = 0; n < s.batch; ++n)
    for (int co = 0; co < s.out_channels; ++co)
      for (int oy = 0; oy < s.out_height(); ++oy)
        for (int ox = 0; ox < s.out_width(); ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < s.in_channels; ++ci)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int iy = oy * s.stride - s.pad + ky;
                const int ix = ox * s.stride - s.pad + kx;
                if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
                acc += input[in_index(s, n, ci, iy, ix)] * weight[w_index(s, co, ci, ky, kx)];
              }
          output[out_index(s, n, co, oy, ox)] = acc;
        }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_output, std::span<const double> weight,
                           std::span<double> grad_input) {
  check_size(grad_input.size(), s.input_size(), "conv2d grad_input");
  std::fill(grad_input.begin(), grad_input.end(), 0.0);
  for (int n = 0; n < s.batch; ++n)
    for (int co = 0; co < s.out_channels; ++co)
      for (int oy = 0; oy < s.out_height(); ++oy)
        for (int ox = 0; ox < s.out_width(); ++ox) {
          const double g = grad_output[out_index(s, n, co, oy, ox)];
          for (int ci = 0; ci < s.in_channels; ++ci)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int iy = oy * s.stride - s.pad + ky;
                const int ix = ox * s.stride - s.pad + kx;
                if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
                grad_input[in_index(s, n, ci, iy, ix)] += g * weight[w_index(s, co, ci, ky, kx)];
              }
        }
}

void conv2d_backward_weight(const ConvShape& s, std::span<const double> input, std::span<const double> grad_output,
                            std::span<double> grad_weight) {
  check_size(grad_weight.size(), s.weight_size(), "conv2d grad_weight");
  for (int n = 0; n < s.batch; ++n)
    for (int co = 0; co < s.out_channels; ++co)
      for (int oy = 0; oy < s.out_height(); ++oy)
        for (int ox = 0; ox < s.out_width(); ++ox) {
          const double g = grad_output[out_index(s, n, co, oy, ox)];
          for (int ci = 0; ci < s.in_channels; ++ci)
            for (int ky = 0; ky < s.kernel; ++ky)
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int iy = oy * s.stride - s.pad + ky;
                const int ix = ox * s.stride - s.pad + kx;
                if (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width) continue;
                grad_weight[w_index(s, co, ci, ky, kx)] += g * input[in_index(s, n, ci, iy, ix)];
              }
        }
}

void batchnorm_forward_train(const BatchNormShape& s, std::span<const double> x, std::span<const double> gamma,
                             std::span<const double> beta, double eps, std::span<double> y, std::span<double> xhat,
                             std::span<double> mean, std::span<double> var) {
  const double m = static_cast<double>(s.batch) * s.plane;
  for (int c = 0; c < s.channels; ++c) {
    double mu = 0.0;
    for (int n = 0; n < s.batch; ++n)
      for (int k = 0; k < s.plane; ++k) mu += x[(static_cast<std::size_t>(n) * s.channels + c) * s.plane + k];
    mu /= m;
    double v = 0.0;
    for (int n = 0; n < s.batch; ++n)
      for (int k = 0; k < s.plane; ++k) {
        const double d = x[(static_cast<std::size_t>(n) * s.channels + c) * s.plane + k] - mu;
        v += d * d;
      }
    v /= m;
    for (int n = 0; n < s.batch; ++n)
      for (int k = 0; k < s.plane; ++k) {
        const std::size_t i = (static_cast<std::size_t>(n) * s.channels + c) * s.plane + k;
        xhat[i] = (x[i] - mu) / std::sqrt(v + eps);
        y[i] = gamma[c] * xhat[i] + beta[c];
      }
    mean[c] = mu;
    var[c] = v;
  }
}

void batchnorm_backward(const BatchNormShape& s, std::span<const double> grad_y, std::span<const double> xhat,
                        std::span<const double> gamma, std::span<const double> inv_std, std::span<double> grad_x,
                        std::span<double> grad_gamma, std::span<double> grad_beta) {
  const double m = static_cast<double>(s.batch) * s.plane;
  for (int c = 0; c < s.channels; ++c) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (int n = 0; n < s.batch; ++n)
      for (int k = 0; k < s.plane; ++k) {
        const std::size_t i = (static_cast<std::size_t>(n) * s.channels + c) * s.plane + k;
        grad_gamma[c] += grad_y[i] * xhat[i];
        grad_beta[c] += grad_y[i];
        mean_dxhat += grad_y[i] * gamma[c];
        mean_dxhat_xhat += grad_y[i] * gamma[c] * xhat[i];
      }
    mean_dxhat /= m;
    mean_dxhat_xhat /= m;
    for (int n = 0; n < s.batch; ++n)
      for (int k = 0; k < s.plane; ++k) {
        const std::size_t i = (static_cast<std::size_t>(n) * s.channels + c) * s.plane + k;
        grad_x[i] = inv_std[c] * (grad_y[i] * gamma[c] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
      }
  }
}

}  // namespace reference

}  // namespace gssl::kernels
