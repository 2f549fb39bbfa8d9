#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <vector>

#include "ddppo/common/error.hpp"

namespace ddppo {

using Bytes = std::vector<unsigned char>;

// Little-endian append helpers.
class ByteWriter {
 public:
  explicit ByteWriter(Bytes& out) : out_(out) {}

  template <typename T>
  void put_le(T v) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    const U u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<unsigned char>(u >> (8 * i)));
    }
  }

  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }

  void put_bytes(std::span<const unsigned char> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void put_bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  Bytes& out_;
};

// Bounds-checked little-endian reader; throws ProtocolError when truncated.
class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> in) : in_(in) {}

  template <typename T>
  T get_le() {
    static_assert(std::is_integral_v<T>);
    require(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(U{in_[pos_ + i]} << (8 * i));
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

  std::span<const unsigned char> get_bytes(std::size_t n) {
    require(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const unsigned char> rest() {
    auto s = in_.subspan(pos_);
    pos_ = in_.size();
    return s;
  }

  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void require(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ProtocolError("truncated message");
  }

  std::span<const unsigned char> in_;
  std::size_t pos_ = 0;
};

}  // namespace ddppo
