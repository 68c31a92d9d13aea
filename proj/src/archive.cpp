#include "ismallnet/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ismallnet/errors.hpp"

namespace ismallnet {
namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian");

constexpr char kMagic[4] = {'I', 'S', 'N', 'A'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw LoadError("truncated archive: " + path.string());
  }
  return value;
}

std::string get_string(std::istream& in, std::size_t length, const std::filesystem::path& path) {
  std::string s(length, '\0');
  if (length && !in.read(s.data(), static_cast<std::streamsize>(length))) {
    throw LoadError("truncated archive: " + path.string());
  }
  return s;
}

}  // namespace

void save_archive(const std::filesystem::path& path, const Archive& archive) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(archive.manifest.size()));
  out.write(archive.manifest.data(), static_cast<std::streamsize>(archive.manifest.size()));
  put(out, static_cast<std::uint64_t>(archive.arrays.size()));
  for (const auto& [name, array] : archive.arrays) {
    const auto expected = std::accumulate(array.shape.begin(), array.shape.end(), std::int64_t{1},
                                          std::multiplies<>());
    if (expected != static_cast<std::int64_t>(array.values.size())) {
      throw ShapeError("archive array '" + name + "': shape does not match value count");
    }
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::uint32_t>(array.shape.size()));
    for (auto d : array.shape) put(out, d);
    out.write(reinterpret_cast<const char*>(array.values.data()),
              static_cast<std::streamsize>(array.values.size() * sizeof(float)));
  }
  if (!out) throw LoadError("write failed: " + path.string());
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw LoadError("not an archive: " + path.string());
  }
  if (get<std::uint32_t>(in, path) != kVersion) {
    throw LoadError("unsupported archive version: " + path.string());
  }
  Archive archive;
  archive.manifest = get_string(in, get<std::uint64_t>(in, path), path);
  const auto count = get<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(in, get<std::uint32_t>(in, path), path);
    NamedArray array;
    const auto ndim = get<std::uint32_t>(in, path);
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      array.shape.push_back(get<std::int64_t>(in, path));
      if (array.shape.back() < 0) throw LoadError("negative dimension in " + path.string());
      n *= array.shape.back();
    }
    array.values.resize(static_cast<std::size_t>(n));
    if (n && !in.read(reinterpret_cast<char*>(array.values.data()),
                      static_cast<std::streamsize>(n * sizeof(float)))) {
      throw LoadError("truncated archive: " + path.string());
    }
    archive.arrays.emplace(std::move(name), std::move(array));
  }
  return archive;
}

}  // namespace ismallnet
