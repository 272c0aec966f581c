// SPDX-License-Identifier: Apache-2.0
#pragma once

// Brute-force reference implementations. None of these call into the code
// they are used to check.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gssl/image.hpp"
#include "gssl/transforms.hpp"

namespace gssl::oracle {

/// -log(exp(z_y) / sum_k exp(z_k)) evaluated directly in long double.
long double ce_oracle(std::span<const double> logits, int target);

/// max_margin * n_j^(-1/4) / max_k n_k^(-1/4) in long double.
std::vector<long double> ldam_margin_oracle(std::span<const int> counts, long double max_margin);

/// Unnormalized (1 - beta) / (1 - beta^n_j) with beta^n by repeated squaring.
std::vector<long double> drw_raw_oracle(std::span<const int> counts, long double beta);

/// floor(n_max * ratio^(j/(K-1))) via exp/log in long double, at least 1.
std::vector<long long> profile_oracle(int num_classes, int n_max, long double ratio);

struct GradCheckReport {
  std::string block;
  double max_rel_error = 0.0;
  double tolerance = 1e-4;
  bool passed = false;
  std::string detail;
};

/// Central differences of `loss` around `params`, compared coordinate-wise
/// with `analytic`. Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport fd_gradient(const std::string& block, const std::function<double(std::span<const double>)>& loss,
                            std::vector<double> params, std::span<const double> analytic, double step = 1e-4,
                            double tolerance = 1e-4);

struct Outcome {
  ImageTensor image;
  int label = 0;
};

/// Every outcome of `task` on `img`. LoRot-E covers all quadrants (16);
/// flip and shuffle act on `quadrant` (2 and 6).
std::vector<Outcome> enumerate_outcomes(transforms::TaskKind task, const ImageTensor& img, int quadrant = 0);

/// True when no two images in `outcomes` are equal and labels are 0..n-1.
bool outcomes_decodable(const std::vector<Outcome>& outcomes);

/// Number of pairwise-distinct images in `outcomes`.
std::size_t distinct_images(const std::vector<Outcome>& outcomes);

/// LoRot-E outcome structure: the four r=0 outcomes equal `img`, the twelve
/// others are pairwise distinct and differ from `img`, labels are 0..15.
bool lorot_structure_holds(const std::vector<Outcome>& outcomes, const ImageTensor& img);

/// Image whose 3*H*W values are pairwise distinct.
ImageTensor distinct_image(int height, int width);

}  // namespace gssl::oracle
