// SPDX-License-Identifier: Apache-2.0
#include "gssl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gssl/errors.hpp"

namespace gssl::loss {

namespace {

void check_logits(const Tensor& logits, std::span<const int> targets, const char* what) {
  if (logits.rank() != 2) throw ShapeError(std::string(what) + ": logits must be (B,C)");
  if (static_cast<std::size_t>(logits.rows()) != targets.size())
    throw ShapeError(std::string(what) + ": " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(logits.rows()) + " rows");
  for (double v : logits.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite logit");
  }
  for (int t : targets) {
    if (t < 0 || t >= logits.cols())
      throw DomainError(std::string(what) + ": target " + std::to_string(t) + " outside [0," +
                        std::to_string(logits.cols()) + ")");
  }
}

// -log softmax(z)[target] and the softmax itself, via log-sum-exp.
double softmax_ce(std::span<const double> z, int target, std::span<double> probs) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    probs[j] = std::exp(z[j] - mx);
    sum += probs[j];
  }
  for (auto& p : probs) p /= sum;
  return mx + std::log(sum) - z[static_cast<std::size_t>(target)];
}

}  // namespace

ClassMargins ldam_margins(std::span<const int> counts, double max_margin, double scale) {
  if (counts.empty()) throw DomainError("ldam_margins: empty class counts");
  if (!(max_margin > 0.0)) throw DomainError("ldam_margins: max_margin must be positive");
  ClassMargins m{std::vector<double>(counts.size()), max_margin, scale};
  double largest = 0.0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] < 1) throw DomainError("ldam_margins: class " + std::to_string(j) + " has zero samples");
    m.deltas[j] = std::pow(static_cast<double>(counts[j]), -0.25);
    largest = std::max(largest, m.deltas[j]);
  }
  for (auto& d : m.deltas) d = max_margin * d / largest;
  return m;
}

ClassWeights drw_weights(std::span<const int> counts, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("drw_weights: beta must lie in (0,1)");
  if (counts.empty()) throw DomainError("drw_weights: empty class counts");
  ClassWeights w{std::vector<double>(counts.size()), beta};
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] < 1) throw DomainError("drw_weights: class " + std::to_string(j) + " has zero samples");
    // 1 - beta^n via expm1.
    const double effective = -std::expm1(static_cast<double>(counts[j]) * std::log(beta));
    w.weights[j] = (1.0 - beta) / effective;
  }
  const double peak = *std::max_element(w.weights.begin(), w.weights.end());
  for (auto& v : w.weights) v /= peak;
  const double mean = std::accumulate(w.weights.begin(), w.weights.end(), 0.0) / static_cast<double>(counts.size());
  for (auto& v : w.weights) v /= mean;
  return w;
}

LdamResult ldam_loss(const Tensor& class_logits, std::span<const int> targets, const ClassMargins& margins,
                     const ClassWeights* weights) {
  check_logits(class_logits, targets, "ldam_loss");
  const int b = class_logits.rows(), k = class_logits.cols();
  if (static_cast<int>(margins.deltas.size()) != k)
    throw ShapeError("ldam_loss: " + std::to_string(margins.deltas.size()) + " margins for " + std::to_string(k) +
                     " classes");
  if (weights && static_cast<int>(weights->weights.size()) != k)
    throw ShapeError("ldam_loss: class weight count does not match K");

  LdamResult r{std::vector<double>(static_cast<std::size_t>(b)), 0.0, Tensor({b, k})};
  std::vector<double> z(static_cast<std::size_t>(k)), probs(static_cast<std::size_t>(k));
  double total_weight = 0.0, total = 0.0;
  for (int i = 0; i < b; ++i) {
    const int y = targets[i];
    for (int j = 0; j < k; ++j) z[j] = margins.scale * (class_logits.at(i, j) - (j == y ? margins.deltas[y] : 0.0));
    const double w = weights ? weights->weights[y] : 1.0;
    r.per_sample[i] = w * softmax_ce(z, y, probs);
    total += r.per_sample[i];
    total_weight += w;
    for (int j = 0; j < k; ++j) r.grad.at(i, j) = w * margins.scale * (probs[j] - (j == y ? 1.0 : 0.0));
  }
  if (b > 0) {
    r.mean = total / total_weight;
    for (auto& g : r.grad.values()) g /= total_weight;
  }
  return r;
}

TaskCeResult task_ce(const Tensor& ssl_logits, std::span<const int> labels) {
  check_logits(ssl_logits, labels, "task_ce");
  const int b = ssl_logits.rows(), c = ssl_logits.cols();
  TaskCeResult r{std::vector<double>(static_cast<std::size_t>(b)), Tensor({b, c})};
  for (int i = 0; i < b; ++i) {
    auto g = r.grad.row(i);
    r.per_sample[i] = softmax_ce(ssl_logits.row(i), labels[i], g);
    g[labels[i]] -= 1.0;
  }
  return r;
}

GatedLossResult gated_total_loss(double l_c, const Tensor& gate, const std::vector<std::vector<double>>& task_losses,
                                 double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("gated_total_loss: lambda must be >= 0");
  if (gate.rank() != 2) throw ShapeError("gated_total_loss: gate must be (B,t)");
  const int b = gate.rows(), t = gate.cols();
  if (static_cast<int>(task_losses.size()) != t)
    throw ShapeError("gated_total_loss: " + std::to_string(task_losses.size()) + " task loss vectors for " +
                     std::to_string(t) + " gate columns");
  for (const auto& l : task_losses) {
    if (static_cast<int>(l.size()) != b) throw ShapeError("gated_total_loss: task loss length differs from batch");
  }
  for (int i = 0; i < b; ++i) {
    double s = 0.0;
    for (double g : gate.row(i)) s += g;
    if (std::abs(s - 1.0) > 1e-6) throw DomainError("gated_total_loss: gate row " + std::to_string(i) + " sums to " +
                                                    std::to_string(s));
  }

  GatedLossResult r;
  r.breakdown.l_c = l_c;
  r.breakdown.per_task_gated.assign(static_cast<std::size_t>(t), 0.0);
  r.grad_gate = Tensor({b, t});
  r.grad_task_losses.assign(static_cast<std::size_t>(t), std::vector<double>(static_cast<std::size_t>(b)));
  const double inv_b = b > 0 ? 1.0 / b : 0.0;
  double gated_sum = 0.0;
  for (int n = 0; n < t; ++n) {
    double acc = 0.0;
    for (int i = 0; i < b; ++i) {
      acc += gate.at(i, n) * task_losses[n][i];
      r.grad_gate.at(i, n) = lambda * task_losses[n][i] * inv_b;
      r.grad_task_losses[n][i] = lambda * gate.at(i, n) * inv_b;
    }
    r.breakdown.per_task_gated[n] = acc * inv_b;
    gated_sum += r.breakdown.per_task_gated[n];
  }
  r.breakdown.l_tot = l_c + lambda * gated_sum;
  return r;
}

}  // namespace gssl::loss
