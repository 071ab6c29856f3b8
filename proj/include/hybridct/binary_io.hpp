#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridct/error.hpp"

namespace hybridct::io {

static_assert(std::endian::native == std::endian::little,
              "binary artifact formats assume a little-endian host");

// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  void put_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::byte*>(data);
    buffer_.insert(buffer_.end(), p, p + size);
  }
  void put_magic(std::string_view magic) { put_bytes(magic.data(), magic.size()); }
  void put_u32(std::uint32_t v) { put_bytes(&v, sizeof v); }
  void put_u64(std::uint64_t v) { put_bytes(&v, sizeof v); }
  void put_f64(double v) { put_bytes(&v, sizeof v); }
  void put_string(std::string_view s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  template <typename T>
  void put_array(std::span<const T> values) {
    put_bytes(values.data(), values.size_bytes());
  }

  const std::vector<std::byte>& bytes() const { return buffer_; }

 private:
  std::vector<std::byte> buffer_;
};

// Bounds-checked reader; any overrun is reported as an integrity error.
class ByteReader {
 public:
  ByteReader(std::span<const std::byte> data, std::string source)
      : data_(data), source_(std::move(source)) {}

  void get_bytes(void* out, std::size_t size) {
    require(size <= data_.size() - offset_, ErrorCode::kIntegrity,
            source_ + ": truncated data at byte " + std::to_string(offset_));
    std::memcpy(out, data_.data() + offset_, size);
    offset_ += size;
  }
  bool expect_magic(std::string_view magic) {
    if (magic.size() > data_.size() - offset_) return false;
    const bool ok = std::memcmp(data_.data() + offset_, magic.data(), magic.size()) == 0;
    if (ok) offset_ += magic.size();
    return ok;
  }
  std::uint32_t get_u32() { std::uint32_t v; get_bytes(&v, sizeof v); return v; }
  std::uint64_t get_u64() { std::uint64_t v; get_bytes(&v, sizeof v); return v; }
  double get_f64() { double v; get_bytes(&v, sizeof v); return v; }
  std::string get_string() {
    const std::uint32_t size = get_u32();
    std::string s(size, '\0');
    get_bytes(s.data(), size);
    return s;
  }
  template <typename T>
  void get_array(std::span<T> out) { get_bytes(out.data(), out.size_bytes()); }

  std::size_t remaining() const { return data_.size() - offset_; }
  std::size_t offset() const { return offset_; }

 private:
  std::span<const std::byte> data_;
  std::size_t offset_ = 0;
  std::string source_;
};

std::vector<std::byte> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames, so readers never observe a
// partially written artifact.
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace hybridct::io
