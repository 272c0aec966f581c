// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "gssl/layers.hpp"

namespace gssl::nn {

enum class BackboneKind { ResNet32Cifar, ResNet18, TinyCnn };

struct BackboneSpec {
  BackboneKind kind;
  int feature_dim;  // 64, 512, 512
};

BackboneSpec backbone_spec(BackboneKind kind) noexcept;
std::string_view backbone_name(BackboneKind kind) noexcept;
std::optional<BackboneKind> parse_backbone(std::string_view name);

/// Maps (B,3,H,W) images to (B,D) pooled features.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual BackboneKind kind() const noexcept = 0;
  int feature_dim() const noexcept { return backbone_spec(kind()).feature_dim; }

  virtual Tensor forward(const Tensor& images, Mode mode) = 0;
  /// Accumulates parameter gradients; the image gradient is not computed.
  virtual void backward(const Tensor& grad_features) = 0;
  virtual void collect(std::vector<Parameter*>& params) = 0;
  virtual void collect_buffers(std::vector<Buffer>& buffers) = 0;
};

/// Parameters are named "backbone.<path>" and seeded from (seed, name).
std::unique_ptr<Backbone> make_backbone(BackboneKind kind, std::uint64_t seed);

}  // namespace gssl::nn
