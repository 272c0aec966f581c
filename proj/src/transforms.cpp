// SPDX-License-Identifier: Apache-2.0
#include "gssl/transforms.hpp"

#include <algorithm>
#include <string>

#include "gssl/errors.hpp"

namespace gssl::transforms {

namespace {

constexpr std::array<std::array<int, 3>, 6> kPermutations = {{
    {0, 1, 2},
    {0, 2, 1},
    {1, 0, 2},
    {1, 2, 0},
    {2, 0, 1},
    {2, 1, 0},
}};

void require_range(int v, int hi, const char* what) {
  if (v < 0 || v > hi) throw DomainError(std::string(what) + " out of range: " + std::to_string(v));
}

}  // namespace

QuadrantId::QuadrantId(int value) : value_(value) { require_range(value, 3, "quadrant"); }
RotationStep::RotationStep(int value) : value_(value) { require_range(value, 3, "rotation step"); }
Permutation3::Permutation3(int index) : index_(index) { require_range(index, 5, "permutation index"); }

const std::array<int, 3>& Permutation3::mapping() const noexcept { return kPermutations[index_]; }

Permutation3 Permutation3::from_mapping(const std::array<int, 3>& m) {
  for (int i = 0; i < 6; ++i) {
    if (kPermutations[i] == m) return Permutation3(i);
  }
  throw DomainError("not a permutation of (0,1,2)");
}

Permutation3 Permutation3::inverse() const {
  std::array<int, 3> inv{};
  for (int c = 0; c < 3; ++c) inv[mapping()[c]] = c;
  return from_mapping(inv);
}

Permutation3 Permutation3::after(Permutation3 first) const {
  std::array<int, 3> m{};
  for (int c = 0; c < 3; ++c) m[c] = first.mapping()[mapping()[c]];
  return from_mapping(m);
}

int label_cardinality(TaskKind task) noexcept {
  switch (task) {
    case TaskKind::LorotE: return 16;
    case TaskKind::QuadFlip: return 2;
    case TaskKind::ChannelShuffle: return 6;
  }
  return 0;
}

std::string_view task_name(TaskKind task) noexcept {
  switch (task) {
    case TaskKind::LorotE: return "lorot_e";
    case TaskKind::QuadFlip: return "flip";
    case TaskKind::ChannelShuffle: return "shuffle";
  }
  return "?";
}

std::string_view task_display_name(TaskKind task) noexcept {
  switch (task) {
    case TaskKind::LorotE: return "LoRot-E";
    case TaskKind::QuadFlip: return "Flip";
    case TaskKind::ChannelShuffle: return "ShuffleChannel";
  }
  return "?";
}

std::optional<TaskKind> parse_task(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(s.begin(), s.end(), '-', '_');
  if (s == "lorot_e" || s == "lorot" || s == "rotation") return TaskKind::LorotE;
  if (s == "flip" || s == "quad_flip") return TaskKind::QuadFlip;
  if (s == "shuffle" || s == "channel_shuffle" || s == "shufflechannel") return TaskKind::ChannelShuffle;
  return std::nullopt;
}

QuadrantRegion quadrant_bounds(QuadrantId q, int height, int width) {
  if (height < 2 || width < 2)
    throw DimensionError("quadrants need H, W >= 2, got " + std::to_string(height) + "x" + std::to_string(width));
  const int mid_r = height / 2;
  const int mid_c = width / 2;
  const bool bottom = q.value() >= 2;
  const bool right = q.value() % 2 == 1;
  return {bottom ? mid_r : 0, bottom ? height : mid_r, right ? mid_c : 0, right ? width : mid_c};
}

Transformed apply_lorot_e(const ImageTensor& img, QuadrantId q, RotationStep r) {
  const auto reg = quadrant_bounds(q, img.height(), img.width());
  const int label = 4 * q.value() + r.value();
  if (r.value() % 2 == 1 && reg.rows() != reg.cols())
    throw ShapeError("odd rotation needs a square quadrant, got " + std::to_string(reg.rows()) + "x" +
                     std::to_string(reg.cols()));
  ImageTensor out = img;
  if (r.value() == 0) return {std::move(out), label};

  const int n_r = reg.rows();
  const int n_c = reg.cols();
  for (int c = 0; c < ImageTensor::kChannels; ++c) {
    for (int i = 0; i < n_r; ++i) {
      for (int j = 0; j < n_c; ++j) {
        // Source pixel for counterclockwise rotation of the block.
        int si = i, sj = j;
        switch (r.value()) {
          case 1: si = j; sj = n_c - 1 - i; break;
          case 2: si = n_r - 1 - i; sj = n_c - 1 - j; break;
          case 3: si = n_r - 1 - j; sj = i; break;
          default: break;
        }
        out.at(c, reg.row_begin + i, reg.col_begin + j) = img.at(c, reg.row_begin + si, reg.col_begin + sj);
      }
    }
  }
  return {std::move(out), label};
}

Transformed apply_quadrant_flip(const ImageTensor& img, QuadrantId q, bool flipped) {
  const auto reg = quadrant_bounds(q, img.height(), img.width());
  ImageTensor out = img;
  if (!flipped) return {std::move(out), 0};
  for (int c = 0; c < ImageTensor::kChannels; ++c) {
    for (int y = reg.row_begin; y < reg.row_end; ++y) {
      for (int j = 0; j < reg.cols(); ++j) {
        out.at(c, y, reg.col_begin + j) = img.at(c, y, reg.col_end - 1 - j);
      }
    }
  }
  return {std::move(out), 1};
}

Transformed apply_channel_shuffle(const ImageTensor& img, QuadrantId q, Permutation3 p) {
  const auto reg = quadrant_bounds(q, img.height(), img.width());
  ImageTensor out = img;
  const auto& m = p.mapping();
  for (int c = 0; c < ImageTensor::kChannels; ++c) {
    if (m[c] == c) continue;
    for (int y = reg.row_begin; y < reg.row_end; ++y) {
      for (int x = reg.col_begin; x < reg.col_end; ++x) out.at(c, y, x) = img.at(m[c], y, x);
    }
  }
  return {std::move(out), p.index()};
}

TransformOutcome make_outcome(TaskKind task, QuadrantId q, TransformParams params) {
  int label = 0;
  switch (task) {
    case TaskKind::LorotE:
      if (!std::holds_alternative<RotationStep>(params)) throw CompositionError("LoRot-E expects a rotation step");
      label = 4 * q.value() + std::get<RotationStep>(params).value();
      break;
    case TaskKind::QuadFlip:
      if (!std::holds_alternative<bool>(params)) throw CompositionError("flip expects a flag");
      label = std::get<bool>(params) ? 1 : 0;
      break;
    case TaskKind::ChannelShuffle:
      if (!std::holds_alternative<Permutation3>(params)) throw CompositionError("shuffle expects a permutation");
      label = std::get<Permutation3>(params).index();
      break;
  }
  return {task, q, params, label};
}

TransformOutcome sample_outcome(TaskKind task, Rng& rng) {
  const QuadrantId q(static_cast<int>(rng.uniform_int(4)));
  switch (task) {
    case TaskKind::LorotE:
      return make_outcome(task, q, RotationStep(static_cast<int>(rng.uniform_int(4))));
    case TaskKind::QuadFlip:
      return make_outcome(task, q, rng.uniform_int(2) == 1);
    case TaskKind::ChannelShuffle:
      return make_outcome(task, q, Permutation3(static_cast<int>(rng.uniform_int(6))));
  }
  throw DomainError("unknown task kind");
}

Transformed apply_outcome(const ImageTensor& img, const TransformOutcome& o) {
  switch (o.task) {
    case TaskKind::LorotE: return apply_lorot_e(img, o.quadrant, std::get<RotationStep>(o.params));
    case TaskKind::QuadFlip: return apply_quadrant_flip(img, o.quadrant, std::get<bool>(o.params));
    case TaskKind::ChannelShuffle:
      return apply_channel_shuffle(img, o.quadrant, std::get<Permutation3>(o.params));
  }
  throw DomainError("unknown task kind");
}

ComposedResult apply_composed(const ImageTensor& img, std::span<const TransformOutcome> outcomes) {
  std::array<int, 3> slot = {-1, -1, -1};
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    auto& s = slot[static_cast<int>(outcomes[i].task)];
    if (s >= 0)
      throw CompositionError("task " + std::string(task_name(outcomes[i].task)) + " appears more than once");
    s = static_cast<int>(i);
  }
  ComposedResult result{img, std::vector<int>(outcomes.size())};
  for (TaskKind task : kAllTasks) {
    const int i = slot[static_cast<int>(task)];
    if (i < 0) continue;
    auto t = apply_outcome(result.image, outcomes[i]);
    result.image = std::move(t.image);
    result.labels[i] = t.label;
  }
  return result;
}

}  // namespace gssl::transforms
