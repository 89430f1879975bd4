#pragma once

#include <bit>
#include <cstdint>
#include <string_view>

namespace mars {

// FNV-1a over little-endian 64-bit words; used for config and state digests.
struct Hasher {
  std::uint64_t h{0xcbf29ce484222325ULL};

  void add(std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  void add(std::int64_t v) noexcept { add(static_cast<std::uint64_t>(v)); }
  void add(int v) noexcept { add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
  void add(bool v) noexcept { add(std::uint64_t{v}); }
  void add(double v) noexcept { add(std::bit_cast<std::uint64_t>(v)); }
  void add(std::string_view s) noexcept {
    add(static_cast<std::uint64_t>(s.size()));
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
};

} // namespace mars
