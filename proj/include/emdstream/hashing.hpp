#pragma once

#include <cstdint>

namespace emdstream {

/// 128-bit key for keyed hashing of sketch coordinates.
struct SketchKey {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  friend bool operator==(const SketchKey&, const SketchKey&) = default;
};

namespace detail {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Hash of (key, counter, coord); counter-mode stream per coordinate.
constexpr std::uint64_t keyed_hash(const SketchKey& key, std::uint64_t counter,
                                   std::uint64_t coord) noexcept {
  const std::uint64_t base = mix64(coord ^ key.lo) ^ key.hi;
  return mix64(base + (counter + 1) * 0xD1B54A32D192ED03ULL);
}

}  // namespace detail

/// Deterministic key derivation from a seed and up to three labels.
constexpr SketchKey derive_key(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                               std::uint64_t c = 0) noexcept {
  std::uint64_t h = detail::mix64(seed ^ 0x5EED5EED5EED5EEDULL);
  h = detail::mix64(h ^ (a + 0x100000001B3ULL));
  h = detail::mix64(h ^ (b + 0xCBF29CE484222325ULL));
  h = detail::mix64(h ^ (c + 0x9E3779B97F4A7C15ULL));
  return {h, detail::mix64(h ^ 0xA5A5A5A5A5A5A5A5ULL)};
}

}  // namespace emdstream
