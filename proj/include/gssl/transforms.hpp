// SPDX-License-Identifier: Apache-2.0
#pragma once

// Localizable pretext transforms. Each picks one quadrant of a 2x2 grid and
// applies a rotation, a left-right mirror or an RGB permutation to it; the
// applied parameters are encoded as a self-label the network must predict.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "gssl/image.hpp"
#include "gssl/rng.hpp"

namespace gssl::transforms {

/// 0 = top-left, 1 = top-right, 2 = bottom-left, 3 = bottom-right.
class QuadrantId {
 public:
  explicit QuadrantId(int value);
  int value() const noexcept { return value_; }
  friend bool operator==(QuadrantId, QuadrantId) = default;

 private:
  int value_;
};

/// Counterclockwise rotation by value x 90 degrees.
class RotationStep {
 public:
  explicit RotationStep(int value);
  int value() const noexcept { return value_; }
  friend bool operator==(RotationStep, RotationStep) = default;

 private:
  int value_;
};

/// One of the six permutations of (0,1,2), indexed in lexicographic order.
class Permutation3 {
 public:
  explicit Permutation3(int index);
  int index() const noexcept { return index_; }
  /// Output channel c reads input channel mapping()[c].
  const std::array<int, 3>& mapping() const noexcept;
  Permutation3 inverse() const;
  /// Permutation applying `first` and then `*this`.
  Permutation3 after(Permutation3 first) const;
  static Permutation3 from_mapping(const std::array<int, 3>& m);
  friend bool operator==(Permutation3, Permutation3) = default;

 private:
  int index_;
};

enum class TaskKind { LorotE = 0, QuadFlip = 1, ChannelShuffle = 2 };

inline constexpr std::array<TaskKind, 3> kAllTasks = {TaskKind::LorotE, TaskKind::QuadFlip,
                                                      TaskKind::ChannelShuffle};

/// Number of self-label classes: 16, 2 and 6.
int label_cardinality(TaskKind task) noexcept;
/// Canonical short name: lorot_e, flip, shuffle.
std::string_view task_name(TaskKind task) noexcept;
/// Name used in result tables: LoRot-E, Flip, ShuffleChannel.
std::string_view task_display_name(TaskKind task) noexcept;
/// Accepts the canonical names and a few aliases; nullopt when unknown.
std::optional<TaskKind> parse_task(std::string_view name);

struct QuadrantRegion {
  int row_begin, row_end, col_begin, col_end;  // half-open
  int rows() const noexcept { return row_end - row_begin; }
  int cols() const noexcept { return col_end - col_begin; }
  friend bool operator==(const QuadrantRegion&, const QuadrantRegion&) = default;
};

/// Split at floor(H/2), floor(W/2). Throws DimensionError when H or W < 2.
QuadrantRegion quadrant_bounds(QuadrantId q, int height, int width);

struct Transformed {
  ImageTensor image;
  int label;
};

/// Label = 4 * quadrant + rotation. Odd rotations need a square quadrant.
Transformed apply_lorot_e(const ImageTensor& img, QuadrantId q, RotationStep r);
/// Label = 1 when the quadrant's columns were reversed.
Transformed apply_quadrant_flip(const ImageTensor& img, QuadrantId q, bool flipped);
/// Label = permutation index.
Transformed apply_channel_shuffle(const ImageTensor& img, QuadrantId q, Permutation3 p);

using TransformParams = std::variant<RotationStep, bool, Permutation3>;

struct TransformOutcome {
  TaskKind task;
  QuadrantId quadrant;
  TransformParams params;
  int label;
};

/// Builds a consistent outcome (label computed from params).
TransformOutcome make_outcome(TaskKind task, QuadrantId q, TransformParams params);

/// Uniform over quadrants and over the task's parameter set.
TransformOutcome sample_outcome(TaskKind task, Rng& rng);

/// Applies a single outcome.
Transformed apply_outcome(const ImageTensor& img, const TransformOutcome& outcome);

struct ComposedResult {
  ImageTensor image;
  std::vector<int> labels;  // aligned with the input outcome order
};

/// Applies the outcomes in the fixed order LoRot-E, flip, shuffle regardless of
/// list order. Throws CompositionError on a repeated task.
ComposedResult apply_composed(const ImageTensor& img, std::span<const TransformOutcome> outcomes);

}  // namespace gssl::transforms
