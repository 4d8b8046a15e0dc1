#pragma once

// Little-endian primitives for the "CRML" container shared by model
// checkpoints and dataset caches.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "crm/error.hpp"

namespace crm::io {

inline constexpr std::array<char, 4> kMagic = {'C', 'R', 'M', 'L'};
inline constexpr std::uint32_t kFormatVersion = 1;

enum class Payload : std::uint32_t { Model = 1, Dataset = 2 };

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }

  void header(Payload payload) {
    out_.write(kMagic.data(), kMagic.size());
    u32(kFormatVersion);
    u32(static_cast<std::uint32_t>(payload));
  }
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void u64(std::uint64_t v) { raw(to_little(v)); }
  void f64(double v) { raw(to_little(std::bit_cast<std::uint64_t>(v))); }
  void f64s(std::span<const double> values) {
    for (const double v : values) f64(v);
  }
  void bytes(const std::string& s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

  void finish() {
    out_.flush();
    if (!out_) throw IoError("write to '" + path_.string() + "' failed");
  }

 private:
  template <typename T>
  void raw(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path.string() + "' for reading");
  }

  void header(Payload expected) {
    std::array<char, 4> magic{};
    read_into(magic.data(), magic.size());
    if (magic != kMagic) throw FormatError(path_.string() + ": bad magic, not a CRML file");
    const auto version = u32();
    if (version != kFormatVersion)
      throw FormatError(path_.string() + ": unsupported format version " + std::to_string(version));
    const auto payload = u32();
    if (payload != static_cast<std::uint32_t>(expected))
      throw FormatError(path_.string() + ": unexpected payload kind " + std::to_string(payload));
  }
  std::uint32_t u32() { return to_little(raw<std::uint32_t>()); }
  std::uint64_t u64() { return to_little(raw<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(to_little(raw<std::uint64_t>())); }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    read_into(s.data(), n);
    return s;
  }

  /// Bytes left between the read position and the end of the file.
  std::uint64_t remaining() {
    const auto pos = in_.tellg();
    in_.seekg(0, std::ios::end);
    const auto end = in_.tellg();
    in_.seekg(pos);
    return static_cast<std::uint64_t>(end - pos);
  }

  /// Throws unless the stream is exhausted.
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof())
      throw FormatError(path_.string() + ": trailing bytes after payload");
  }

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  template <typename T>
  T raw() {
    T v{};
    read_into(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }
  void read_into(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError(path_.string() + ": truncated file");
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace crm::io
