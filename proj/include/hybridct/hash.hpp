#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace hybridct {

// 64-bit FNV-1a. Used for config fingerprints and blob checksums; not a
// cryptographic digest.
class Fnv1a64 {
 public:
  Fnv1a64& update(std::span<const std::byte> bytes) {
    for (std::byte b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  Fnv1a64& update(std::string_view text) {
    return update(std::as_bytes(std::span(text.data(), text.size())));
  }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view text) { return Fnv1a64().update(text).digest(); }

inline std::uint64_t fnv1a64(std::span<const std::byte> bytes) {
  return Fnv1a64().update(bytes).digest();
}

inline std::string to_hex(std::uint64_t value) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
  return buffer;
}

}  // namespace hybridct
