// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gssl/image.hpp"

namespace gssl::data {

struct LabeledExample {
  ImageTensor image;
  int class_label;
};

/// Immutable collection of equally sized images with class labels.
///
/// Real datasets store 8-bit pixels and scale to [0,1] on access. Synthetic
/// data stores floats.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, int num_classes, int height, int width, std::vector<int> labels,
          std::vector<std::uint8_t> pixels);
  Dataset(std::string name, int num_classes, int height, int width, std::vector<int> labels,
          std::vector<float> pixels);

  const std::string& name() const noexcept { return name_; }
  int num_classes() const noexcept { return num_classes_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::span<const int> labels() const noexcept { return labels_; }
  int label(std::size_t i) const { return labels_.at(i); }

  ImageTensor image(std::size_t i) const;
  LabeledExample example(std::size_t i) const { return {image(i), label(i)}; }

  /// Copies the selected examples, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

  /// Raw 8-bit pixels of example i (only for byte-backed datasets).
  std::span<const std::uint8_t> raw_bytes(std::size_t i) const;
  bool byte_backed() const noexcept { return std::holds_alternative<std::vector<std::uint8_t>>(pixels_); }

 private:
  std::size_t image_volume() const noexcept { return 3u * static_cast<std::size_t>(height_) * width_; }

  std::string name_;
  int num_classes_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<int> labels_;
  std::variant<std::vector<std::uint8_t>, std::vector<float>> pixels_;
};

struct DatasetSplits {
  Dataset train;
  Dataset test;  // "val" for Tiny-ImageNet
};

enum class DatasetName { Cifar10, Cifar100, TinyImageNet, Synthetic };

std::optional<DatasetName> parse_dataset_name(std::string_view s);
std::string_view dataset_name(DatasetName d) noexcept;
/// 10 / 100 / 200; nullopt for synthetic (configurable).
std::optional<int> dataset_classes(DatasetName d) noexcept;

// ---------------------------------------------------------------------------
// Long-tailed profiles

struct ImbalanceProfile {
  int num_classes = 0;
  std::vector<int> counts;  // n_j, non-increasing
  double ratio = 1.0;
};

/// n_j = floor(n_max * ratio^(j/(K-1))), clamped to at least 1.
ImbalanceProfile exponential_profile(int num_classes, int n_max, double ratio);

/// Per class j, the first n_j of a seeded shuffle of that class's indices.
/// Result is sorted ascending. Throws DataError when a class is too small.
std::vector<std::size_t> subsample_indices(std::span<const int> class_labels, const ImbalanceProfile& profile,
                                           std::uint64_t seed);

std::vector<int> per_class_counts(std::span<const int> class_labels, int num_classes);

/// Header of a persisted subsample index file.
struct SubsampleHeader {
  std::string dataset;
  double ratio = 1.0;
  std::uint64_t seed = 0;
  std::vector<int> counts;
};

/// One JSON header line followed by one index per line.
void write_subsample_file(const std::filesystem::path& path, const SubsampleHeader& header,
                          std::span<const std::size_t> indices);
std::pair<SubsampleHeader, std::vector<std::size_t>> read_subsample_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Loaders

inline constexpr std::size_t kCifar10RecordBytes = 3073;
inline constexpr std::size_t kCifar100RecordBytes = 3074;
inline constexpr int kCifarSide = 32;

/// Parses concatenated CIFAR-10 records. `base_offset` only shifts the byte
/// offsets reported in FormatError messages.
Dataset parse_cifar10(std::span<const std::uint8_t> bytes, std::string name = "cifar10",
                      std::size_t base_offset = 0);
Dataset parse_cifar100(std::span<const std::uint8_t> bytes, std::string name = "cifar100",
                       std::size_t base_offset = 0);

/// Serializes example i back to a CIFAR record. `coarse_label` is only
/// written for the 100-class format.
std::vector<std::uint8_t> serialize_cifar10_record(const Dataset& d, std::size_t i);
std::vector<std::uint8_t> serialize_cifar100_record(const Dataset& d, std::size_t i, std::uint8_t coarse_label);

/// Accepts either the directory holding the .bin files or its parent.
DatasetSplits load_cifar10(const std::filesystem::path& root);
DatasetSplits load_cifar100(const std::filesystem::path& root);
/// Standard tiny-imagenet-200 layout (root or its parent).
DatasetSplits load_tiny_imagenet(const std::filesystem::path& root);

/// Class-separable images: each class is a distinct colour gradient and
/// fixed texture plus small seeded noise. The test split holds max(1, per_class/4) per class.
DatasetSplits synthetic_dataset(int num_classes, int per_class, int side, std::uint64_t seed);

/// Per-channel mean and standard deviation over a dataset.
struct ChannelStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
};
ChannelStats compute_channel_stats(const Dataset& d);

}  // namespace gssl::data
