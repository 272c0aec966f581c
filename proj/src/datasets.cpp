// SPDX-License-Identifier: Apache-2.0
#include "gssl/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gssl/errors.hpp"
#include "gssl/image_io.hpp"
#include "gssl/rng.hpp"

namespace gssl::data {

namespace fs = std::filesystem;
using json = nlohmann::json;

Dataset::Dataset(std::string name, int num_classes, int height, int width, std::vector<int> labels,
                 std::vector<std::uint8_t> pixels)
    : name_(std::move(name)), num_classes_(num_classes), height_(height), width_(width),
      labels_(std::move(labels)), pixels_(std::move(pixels)) {
  if (std::get<0>(pixels_).size() != labels_.size() * image_volume())
    throw ShapeError("pixel buffer does not match " + std::to_string(labels_.size()) + " images");
}

Dataset::Dataset(std::string name, int num_classes, int height, int width, std::vector<int> labels,
                 std::vector<float> pixels)
    : name_(std::move(name)), num_classes_(num_classes), height_(height), width_(width),
      labels_(std::move(labels)), pixels_(std::move(pixels)) {
  if (std::get<1>(pixels_).size() != labels_.size() * image_volume())
    throw ShapeError("pixel buffer does not match " + std::to_string(labels_.size()) + " images");
}

ImageTensor Dataset::image(std::size_t i) const {
  if (i >= labels_.size()) throw DomainError("example index out of range: " + std::to_string(i));
  const std::size_t vol = image_volume();
  std::vector<float> px(vol);
  if (const auto* bytes = std::get_if<std::vector<std::uint8_t>>(&pixels_)) {
    const auto* src = bytes->data() + i * vol;
    for (std::size_t k = 0; k < vol; ++k) px[k] = static_cast<float>(src[k]) / 255.0f;
  } else {
    const auto& floats = std::get<std::vector<float>>(pixels_);
    std::copy_n(floats.begin() + static_cast<std::ptrdiff_t>(i * vol), vol, px.begin());
  }
  return ImageTensor(height_, width_, std::move(px));
}

std::span<const std::uint8_t> Dataset::raw_bytes(std::size_t i) const {
  const auto* bytes = std::get_if<std::vector<std::uint8_t>>(&pixels_);
  if (!bytes) throw DataError("dataset " + name_ + " is not byte-backed");
  const std::size_t vol = image_volume();
  return {bytes->data() + i * vol, vol};
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const std::size_t vol = image_volume();
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (auto i : indices) labels.push_back(label(i));
  return std::visit(
      [&](const auto& px) {
        using T = typename std::decay_t<decltype(px)>::value_type;
        std::vector<T> out(indices.size() * vol);
        for (std::size_t k = 0; k < indices.size(); ++k)
          std::copy_n(px.begin() + static_cast<std::ptrdiff_t>(indices[k] * vol), vol,
                      out.begin() + static_cast<std::ptrdiff_t>(k * vol));
        return Dataset(name_, num_classes_, height_, width_, std::move(labels), std::move(out));
      },
      pixels_);
}

std::optional<DatasetName> parse_dataset_name(std::string_view s) {
  if (s == "cifar10" || s == "cifar-10") return DatasetName::Cifar10;
  if (s == "cifar100" || s == "cifar-100") return DatasetName::Cifar100;
  if (s == "tiny-imagenet" || s == "tiny_imagenet" || s == "tinyimagenet") return DatasetName::TinyImageNet;
  if (s == "synthetic") return DatasetName::Synthetic;
  return std::nullopt;
}

std::string_view dataset_name(DatasetName d) noexcept {
  switch (d) {
    case DatasetName::Cifar10: return "cifar10";
    case DatasetName::Cifar100: return "cifar100";
    case DatasetName::TinyImageNet: return "tiny-imagenet";
    case DatasetName::Synthetic: return "synthetic";
  }
  return "?";
}

std::optional<int> dataset_classes(DatasetName d) noexcept {
  switch (d) {
    case DatasetName::Cifar10: return 10;
    case DatasetName::Cifar100: return 100;
    case DatasetName::TinyImageNet: return 200;
    case DatasetName::Synthetic: return std::nullopt;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

ImbalanceProfile exponential_profile(int num_classes, int n_max, double ratio) {
  if (num_classes < 2) throw DomainError("imbalance profile needs K >= 2");
  if (n_max < 1) throw DomainError("imbalance profile needs n_max >= 1");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw DomainError("imbalance ratio must lie in (0,1], got " + std::to_string(ratio));
  ImbalanceProfile p{num_classes, std::vector<int>(static_cast<std::size_t>(num_classes)), ratio};
  for (int j = 0; j < num_classes; ++j) {
    const long double e = static_cast<long double>(j) / (num_classes - 1);
    const long double v = static_cast<long double>(n_max) * std::pow(static_cast<long double>(ratio), e);
    // Absorb representation error so exact products (5000 * 0.01) floor to 50.
    const auto n = static_cast<int>(std::floor(v * (1.0L + 1e-12L)));
    p.counts[j] = std::max(1, n);
  }
  return p;
}

std::vector<int> per_class_counts(std::span<const int> class_labels, int num_classes) {
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : class_labels) {
    if (y < 0 || y >= num_classes) throw DataError("class label " + std::to_string(y) + " out of range");
    ++counts[y];
  }
  return counts;
}

std::vector<std::size_t> subsample_indices(std::span<const int> class_labels, const ImbalanceProfile& profile,
                                           std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(profile.num_classes));
  for (std::size_t i = 0; i < class_labels.size(); ++i) {
    const int y = class_labels[i];
    if (y < 0 || y >= profile.num_classes) throw DataError("class label " + std::to_string(y) + " out of range");
    buckets[y].push_back(i);
  }
  std::vector<std::size_t> out;
  for (int j = 0; j < profile.num_classes; ++j) {
    auto& b = buckets[j];
    const auto need = static_cast<std::size_t>(profile.counts[j]);
    if (b.size() < need)
      throw DataError("class " + std::to_string(j) + " has " + std::to_string(b.size()) +
                      " samples, profile needs " + std::to_string(need));
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    rng.shuffle(b.begin(), b.end());
    out.insert(out.end(), b.begin(), b.begin() + static_cast<std::ptrdiff_t>(need));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_subsample_file(const fs::path& path, const SubsampleHeader& header, std::span<const std::size_t> indices) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  json h = {{"format", "gssl-subsample-v1"},
            {"dataset", header.dataset},
            {"ratio", header.ratio},
            {"seed", header.seed},
            {"counts", header.counts},
            {"total", indices.size()}};
  out << h.dump() << '\n';
  for (auto i : indices) out << i << '\n';
}

std::pair<SubsampleHeader, std::vector<std::size_t>> read_subsample_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open subsample file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header at byte 0");
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header at byte 0: " + e.what());
  }
  SubsampleHeader header{h.at("dataset").get<std::string>(), h.at("ratio").get<double>(),
                         h.at("seed").get<std::uint64_t>(), h.at("counts").get<std::vector<int>>()};
  std::vector<std::size_t> indices;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    indices.push_back(static_cast<std::size_t>(std::stoull(line)));
  }
  if (h.contains("total") && h["total"].get<std::size_t>() != indices.size())
    throw FormatError(path.string() + ": header total does not match index count");
  return {std::move(header), std::move(indices)};
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::size_t kCifarPixels = 3072;

Dataset parse_cifar(std::span<const std::uint8_t> bytes, std::string name, std::size_t base_offset, bool fine) {
  const std::size_t rec = fine ? kCifar100RecordBytes : kCifar10RecordBytes;
  const int max_label = fine ? 99 : 9;
  if (bytes.size() % rec != 0)
    throw FormatError(name + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                      std::to_string(rec) + " (trailing record at byte offset " +
                      std::to_string(base_offset + bytes.size() / rec * rec) + ")");
  const std::size_t n = bytes.size() / rec;
  std::vector<int> labels(n);
  std::vector<std::uint8_t> px(n * kCifarPixels);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = i * rec;
    const std::size_t label_at = fine ? at + 1 : at;
    const int y = bytes[label_at];
    if (y > max_label)
      throw FormatError(name + ": label " + std::to_string(y) + " > " + std::to_string(max_label) +
                        " at byte offset " + std::to_string(base_offset + label_at));
    labels[i] = y;
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(at + rec - kCifarPixels), kCifarPixels,
                px.begin() + static_cast<std::ptrdiff_t>(i * kCifarPixels));
  }
  return Dataset(std::move(name), fine ? 100 : 10, kCifarSide, kCifarSide, std::move(labels), std::move(px));
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("missing data file " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path resolve_root(const fs::path& root, const char* subdir, const char* probe) {
  if (fs::exists(root / probe)) return root;
  if (fs::exists(root / subdir / probe)) return root / subdir;
  throw DataError("cannot find " + std::string(probe) + " under " + root.string());
}

Dataset concat_bytes(const std::vector<Dataset>& parts, const std::string& name) {
  std::vector<int> labels;
  std::vector<std::uint8_t> px;
  for (const auto& d : parts) {
    labels.insert(labels.end(), d.labels().begin(), d.labels().end());
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto b = d.raw_bytes(i);
      px.insert(px.end(), b.begin(), b.end());
    }
  }
  return Dataset(name, parts.front().num_classes(), kCifarSide, kCifarSide, std::move(labels), std::move(px));
}

std::vector<std::uint8_t> serialize_cifar(const Dataset& d, std::size_t i, std::optional<std::uint8_t> coarse) {
  auto px = d.raw_bytes(i);
  std::vector<std::uint8_t> rec;
  rec.reserve(kCifar100RecordBytes);
  if (coarse) rec.push_back(*coarse);
  rec.push_back(static_cast<std::uint8_t>(d.label(i)));
  rec.insert(rec.end(), px.begin(), px.end());
  return rec;
}

}  // namespace

Dataset parse_cifar10(std::span<const std::uint8_t> bytes, std::string name, std::size_t base_offset) {
  return parse_cifar(bytes, std::move(name), base_offset, false);
}

Dataset parse_cifar100(std::span<const std::uint8_t> bytes, std::string name, std::size_t base_offset) {
  return parse_cifar(bytes, std::move(name), base_offset, true);
}

std::vector<std::uint8_t> serialize_cifar10_record(const Dataset& d, std::size_t i) {
  return serialize_cifar(d, i, std::nullopt);
}

std::vector<std::uint8_t> serialize_cifar100_record(const Dataset& d, std::size_t i, std::uint8_t coarse_label) {
  return serialize_cifar(d, i, coarse_label);
}

DatasetSplits load_cifar10(const fs::path& root) {
  const fs::path dir = resolve_root(root, "cifar-10-batches-bin", "test_batch.bin");
  std::vector<Dataset> parts;
  for (int b = 1; b <= 5; ++b) {
    const auto file = dir / ("data_batch_" + std::to_string(b) + ".bin");
    parts.push_back(parse_cifar10(read_file(file), file.filename().string()));
  }
  auto test = parse_cifar10(read_file(dir / "test_batch.bin"), "test_batch.bin");
  return {concat_bytes(parts, "cifar10"), concat_bytes({test}, "cifar10")};
}

DatasetSplits load_cifar100(const fs::path& root) {
  const fs::path dir = resolve_root(root, "cifar-100-binary", "test.bin");
  auto train = parse_cifar100(read_file(dir / "train.bin"), "train.bin");
  auto test = parse_cifar100(read_file(dir / "test.bin"), "test.bin");
  return {concat_bytes({train}, "cifar100"), concat_bytes({test}, "cifar100")};
}

DatasetSplits load_tiny_imagenet(const fs::path& root) {
  const fs::path dir = resolve_root(root, "tiny-imagenet-200", "train");
  std::vector<std::string> wnids;
  for (const auto& e : fs::directory_iterator(dir / "train")) {
    if (e.is_directory()) wnids.push_back(e.path().filename().string());
  }
  std::sort(wnids.begin(), wnids.end());
  if (wnids.empty()) throw DataError("no class directories under " + (dir / "train").string());
  std::map<std::string, int> class_of;
  for (std::size_t i = 0; i < wnids.size(); ++i) class_of[wnids[i]] = static_cast<int>(i);

  std::vector<std::pair<fs::path, int>> train_files;
  for (const auto& w : wnids) {
    std::vector<fs::path> files;
    const fs::path img_dir = dir / "train" / w / "images";
    if (!fs::exists(img_dir)) continue;
    for (const auto& e : fs::directory_iterator(img_dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (auto& f : files) train_files.emplace_back(std::move(f), class_of[w]);
  }

  std::vector<std::pair<fs::path, int>> val_files;
  {
    const fs::path ann = dir / "val" / "val_annotations.txt";
    std::ifstream in(ann);
    if (!in) throw DataError("missing " + ann.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string file, wnid;
      std::getline(ls, file, '\t');
      std::getline(ls, wnid, '\t');
      auto it = class_of.find(wnid);
      if (it == class_of.end())
        throw DataError(ann.string() + ":" + std::to_string(lineno) + ": unknown wnid '" + wnid + "'");
      val_files.emplace_back(dir / "val" / "images" / file, it->second);
    }
  }

  const int num_classes = static_cast<int>(wnids.size());
  auto decode = [&](const std::vector<std::pair<fs::path, int>>& files, const std::string& name) {
    if (files.empty()) return Dataset(name, num_classes, 64, 64, {}, std::vector<std::uint8_t>{});
    const ImageTensor first = io::read_jpeg(files.front().first);
    const int h = first.height(), w = first.width();
    const std::size_t vol = 3u * static_cast<std::size_t>(h) * w;
    std::vector<std::uint8_t> px(files.size() * vol);
    std::vector<int> labels(files.size());
    std::vector<std::string> errors(files.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(files.size()); ++i) {
      try {
        const ImageTensor img = io::read_jpeg(files[i].first);
        if (img.height() != h || img.width() != w) {
          errors[i] = files[i].first.string() + ": expected " + std::to_string(h) + "x" + std::to_string(w);
          continue;
        }
        auto src = img.pixels();
        for (std::size_t k = 0; k < vol; ++k)
          px[i * vol + k] = static_cast<std::uint8_t>(std::lround(src[k] * 255.0f));
        labels[i] = files[i].second;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
    for (const auto& e : errors) {
      if (!e.empty()) throw FormatError(e);
    }
    return Dataset(name, num_classes, h, w, std::move(labels), std::move(px));
  };
  return {decode(train_files, "tiny-imagenet"), decode(val_files, "tiny-imagenet")};
}

// ---------------------------------------------------------------------------

DatasetSplits synthetic_dataset(int num_classes, int per_class, int side, std::uint64_t seed) {
  if (num_classes < 2) throw DomainError("synthetic dataset needs K >= 2");
  if (per_class < 1) throw DomainError("synthetic dataset needs per_class >= 1");
  if (side < 2 || side % 2 != 0) throw DimensionError("synthetic image side must be even and >= 2");

  struct Pattern {
    double offset, dy, dx;
    std::vector<double> texture;
  };
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  std::vector<std::array<Pattern, 3>> patterns(static_cast<std::size_t>(num_classes));
  Rng prng(derive_seed(seed, 0x5eed));
  for (auto& cls : patterns) {
    for (auto& p : cls) {
      p = {prng.uniform(0.4, 0.6), prng.uniform(-1.0, 1.0), prng.uniform(-1.0, 1.0), std::vector<double>(plane)};
      for (double& t : p.texture) t = prng.uniform(-1.0, 1.0);
    }
  }

  const std::size_t vol = 3 * plane;
  auto make = [&](int count, std::uint64_t stream) {
    Rng rng(derive_seed(seed, stream));
    std::vector<int> labels;
    std::vector<float> px;
    labels.reserve(static_cast<std::size_t>(num_classes) * count);
    px.reserve(static_cast<std::size_t>(num_classes) * count * vol);
    for (int j = 0; j < num_classes; ++j) {
      for (int k = 0; k < count; ++k) {
        labels.push_back(j);
        for (int c = 0; c < 3; ++c) {
          const Pattern& p = patterns[j][c];
          for (int y = 0; y < side; ++y) {
            const double yy = (y + 0.5) / side - 0.5;
            for (int x = 0; x < side; ++x) {
              const double xx = (x + 0.5) / side - 0.5;
              // Offset in [0.4,0.6]; gradient, texture and noise keep the value within [0.045,0.955].
              const double v = p.offset + 0.15 * (p.dy * yy + p.dx * xx) +
                               0.2 * p.texture[static_cast<std::size_t>(y) * side + x] + rng.uniform(-0.005, 0.005);
              px.push_back(static_cast<float>(v));
            }
          }
        }
      }
    }
    return Dataset("synthetic", num_classes, side, side, std::move(labels), std::move(px));
  };
  return {make(per_class, 1), make(std::max(1, per_class / 4), 2)};
}

ChannelStats compute_channel_stats(const Dataset& d) {
  ChannelStats s;
  if (d.size() == 0) return s;
  const std::size_t plane = static_cast<std::size_t>(d.height()) * d.width();
  std::array<long double, 3> sum{}, sq{};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const ImageTensor img = d.image(i);
    auto px = img.pixels();
    for (int c = 0; c < 3; ++c) {
      for (std::size_t k = 0; k < plane; ++k) {
        const long double v = px[c * plane + k];
        sum[c] += v;
        sq[c] += v * v;
      }
    }
  }
  const long double n = static_cast<long double>(d.size() * plane);
  for (int c = 0; c < 3; ++c) {
    const long double m = sum[c] / n;
    const long double var = std::max(0.0L, sq[c] / n - m * m);
    s.mean[c] = static_cast<double>(m);
    s.stddev[c] = var > 1e-12L ? static_cast<double>(std::sqrt(var)) : 1.0;
  }
  return s;
}

}  // namespace gssl::data
