#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

namespace lepus {

// 64-bit FNV-1a. Used for parameter fingerprints, config digests and file
// payload checksums; not a cryptographic hash.
class Fnv1a {
 public:
  void Update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= kPrime;
    }
  }
  void Update(std::string_view text) { Update(text.data(), text.size()); }
  void Update(std::span<const double> values) {
    Update(values.data(), values.size_bytes());
  }
  template <typename T>
  void UpdateValue(const T& value) {
    Update(&value, sizeof(T));
  }
  std::uint64_t value() const { return state_; }

 private:
  static constexpr std::uint64_t kOffset = 14695981039346656037ULL;
  static constexpr std::uint64_t kPrime = 1099511628211ULL;
  std::uint64_t state_ = kOffset;
};

inline std::string DigestHex(std::uint64_t digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[digest & 0xF];
    digest >>= 4;
  }
  return out;
}

inline std::uint64_t HashString(std::string_view text) {
  Fnv1a h;
  h.Update(text);
  return h.value();
}

}  // namespace lepus
