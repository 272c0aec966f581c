// SPDX-License-Identifier: Apache-2.0
#include "gssl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gssl/errors.hpp"

namespace gssl::ckpt {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'G', 'S', 'S', 'L', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}

  template <typename T>
  T get() {
    T v{};
    bytes(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }

  void bytes(char* dst, std::size_t n) {
    if (!in_.read(dst, static_cast<std::streamsize>(n)))
      throw FormatError(file_ + ": truncated archive at byte offset " + std::to_string(offset_));
    offset_ += n;
  }

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::istream& in_;
  std::string file_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kFormatVersion);
    const std::string manifest = archive.manifest.dump();
    put<std::uint64_t>(out, manifest.size());
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    put<std::uint64_t>(out, archive.tensors.size());
    for (const auto& [name, t] : archive.tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (int d : t.shape()) put<std::int64_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError(path.string() + ": bad magic at byte offset 0");
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion)
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version) + " at byte offset 8");
  Archive a;
  const auto mlen = r.get<std::uint64_t>();
  std::string manifest(mlen, '\0');
  r.bytes(manifest.data(), mlen);
  try {
    a.manifest = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad manifest at byte offset 20: " + e.what());
  }
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto nlen = r.get<std::uint32_t>();
    std::string name(nlen, '\0');
    r.bytes(name.data(), nlen);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError(path.string() + ": implausible rank at byte offset " + std::to_string(r.offset()));
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.get<std::int64_t>());
    Tensor t(shape);
    r.bytes(reinterpret_cast<char*>(t.data()), t.size() * sizeof(double));
    a.tensors.emplace(std::move(name), std::move(t));
  }
  return a;
}

}  // namespace gssl::ckpt
