#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace stec {

inline constexpr bool host_little_endian() {
  return std::endian::native == std::endian::little;
}

// FNV-1a 64-bit; content checksum for blobs and config hashing.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

inline std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0x000000ffu) << 24) | ((v & 0x0000ff00u) << 8) |
         ((v & 0x00ff0000u) >> 8) | ((v & 0xff000000u) >> 24);
}

inline std::uint64_t byteswap64(std::uint64_t v) {
  return ((v & 0x00000000000000ffull) << 56) | ((v & 0x000000000000ff00ull) << 40) |
         ((v & 0x0000000000ff0000ull) << 24) | ((v & 0x00000000ff000000ull) << 8) |
         ((v & 0x000000ff00000000ull) >> 8) | ((v & 0x0000ff0000000000ull) >> 24) |
         ((v & 0x00ff000000000000ull) >> 40) | ((v & 0xff00000000000000ull) >> 56);
}

// In-place little-endian normalization of a double span (no-op on LE hosts).
inline void to_little_endian(std::span<double> xs) {
  if (host_little_endian()) return;
  for (double& x : xs) {
    std::uint64_t v;
    std::memcpy(&v, &x, 8);
    v = byteswap64(v);
    std::memcpy(&x, &v, 8);
  }
}

inline void from_little_endian(std::span<double> xs) { to_little_endian(xs); }

}  // namespace stec
