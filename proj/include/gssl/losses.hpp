// SPDX-License-Identifier: Apache-2.0
#pragma once

// Supervised LDAM loss with deferred re-weighting, per-task cross-entropy for
// the pretext heads, and the gated combination
//
//   L_tot = L_C + lambda * sum_n (1/B) sum_i G[i,n] * L_n[i]
//
// Every loss returns its value together with the analytic gradient.

#include <span>
#include <vector>

#include "gssl/tensor.hpp"

namespace gssl::loss {

struct ClassMargins {
  std::vector<double> deltas;
  double max_margin = 0.5;
  double scale = 30.0;
};

struct ClassWeights {
  std::vector<double> weights;  // mean 1
  double beta = 0.9999;
};

struct LossBreakdown {
  double l_c = 0.0;
  std::vector<double> per_task_gated;
  double l_tot = 0.0;
  bool class_weighted = false;  // DRW weights were applied to l_c
};

/// delta_j = max_margin * n_j^(-1/4) / max_k n_k^(-1/4).
ClassMargins ldam_margins(std::span<const int> counts, double max_margin = 0.5, double scale = 30.0);

/// raw_j = (1 - beta) / (1 - beta^n_j), normalized to mean 1.
ClassWeights drw_weights(std::span<const int> counts, double beta = 0.9999);

struct LdamResult {
  std::vector<double> per_sample;  // weighted when weights are given
  double mean = 0.0;               // sum(per_sample) / sum(applied weights)
  Tensor grad;                     // d mean / d logits, (B,K)
};

/// Cross-entropy over scale * z' where z'_y = z_y - delta_y.
LdamResult ldam_loss(const Tensor& class_logits, std::span<const int> targets, const ClassMargins& margins,
                     const ClassWeights* weights = nullptr);

struct TaskCeResult {
  std::vector<double> per_sample;
  Tensor grad;  // row i is d per_sample[i] / d logits[i]
};

TaskCeResult task_ce(const Tensor& ssl_logits, std::span<const int> labels);

struct GatedLossResult {
  LossBreakdown breakdown;
  Tensor grad_gate;                      // d l_tot / d G, (B,t)
  std::vector<std::vector<double>> grad_task_losses;  // d l_tot / d L_n[i]
};

/// `task_losses[n][i]` is the per-sample loss of task n. Throws ShapeError on
/// mismatched sizes and DomainError when lambda < 0 or a gate row does not
/// sum to 1 within 1e-6.
GatedLossResult gated_total_loss(double l_c, const Tensor& gate, const std::vector<std::vector<double>>& task_losses,
                                 double lambda);

}  // namespace gssl::loss
