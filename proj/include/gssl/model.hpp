// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gssl/backbones.hpp"
#include "gssl/layers.hpp"
#include "gssl/transforms.hpp"

namespace gssl::nn {

struct ForwardOutput {
  Tensor features;                  // X, (B,D)
  Tensor class_logits;              // (B,K)
  std::vector<Tensor> ssl_logits;   // per task, (B,C_task)
  Tensor gate_logits;               // (B,t)
};

/// Loss gradients with respect to each logit block of a ForwardOutput.
struct ForwardGrads {
  Tensor class_logits;
  std::vector<Tensor> ssl_logits;
  Tensor gate_logits;
};

/// Backbone plus a cosine classifier head, one linear head per pretext task and a
/// gating head producing one logit per task. All heads read the pooled
/// backbone features.
class GatedModel {
 public:
  /// Throws ConfigError on an empty or repeated task list.
  static GatedModel assemble(BackboneKind backbone, int num_classes, std::vector<transforms::TaskKind> tasks,
                             std::uint64_t seed);

  GatedModel(GatedModel&&) noexcept = default;
  GatedModel& operator=(GatedModel&&) noexcept = default;

  ForwardOutput forward(const Tensor& images, Mode mode);

  /// Backpropagates through the heads and the backbone, accumulating into the
  /// parameter gradients. With `detach_gate_input` the gate's gradient stops
  /// at X and does not reach the backbone.
  void backward(const ForwardGrads& grads, bool detach_gate_input = false);

  void zero_grad();
  std::vector<Parameter*> parameters();
  std::vector<Buffer> buffers();

  /// Every parameter and buffer keyed by its hierarchical name.
  std::map<std::string, Tensor> state();
  /// Restores tensors by name; missing or mis-shaped entries throw ShapeError.
  void load_state(const std::map<std::string, Tensor>& state);

  BackboneKind backbone_kind() const noexcept { return backbone_->kind(); }
  int num_classes() const noexcept { return num_classes_; }
  int feature_dim() const noexcept { return backbone_->feature_dim(); }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<transforms::TaskKind>& tasks() const noexcept { return tasks_; }
  int num_tasks() const noexcept { return static_cast<int>(tasks_.size()); }

  const NormedLinear& classifier() const noexcept { return classifier_; }
  const Linear& ssl_head(int n) const { return ssl_heads_.at(static_cast<std::size_t>(n)); }
  const Linear& gate() const noexcept { return gate_; }

 private:
  GatedModel() = default;

  std::unique_ptr<Backbone> backbone_;
  NormedLinear classifier_;
  std::vector<Linear> ssl_heads_;
  Linear gate_;
  std::vector<transforms::TaskKind> tasks_;
  int num_classes_ = 0;
  std::uint64_t seed_ = 0;
};

/// Row-wise softmax with max subtraction. Throws NumericError on NaN/Inf.
Tensor gate_distribution(const Tensor& gate_logits);
/// Gradient with respect to the logits given the softmax output and the
/// gradient with respect to it.
Tensor gate_distribution_backward(const Tensor& gate, const Tensor& grad_gate);

}  // namespace gssl::nn
