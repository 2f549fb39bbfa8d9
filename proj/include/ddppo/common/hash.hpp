#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>

namespace ddppo {

// 64-bit FNV-1a. Stable across platforms and runs.
class Fnv1a {
 public:
  void update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= 0x100000001b3ULL;
    }
  }

  void update(std::string_view s) { update(s.data(), s.size()); }

  void update_u64(std::uint64_t v) {
    unsigned char le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(v >> (8 * i));
    update(le, sizeof(le));
  }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

// Hash of the exact bit patterns of a double vector.
inline std::uint64_t hash_doubles(std::span<const double> values) {
  Fnv1a h;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    h.update_u64(bits);
  }
  return h.digest();
}

}  // namespace ddppo
