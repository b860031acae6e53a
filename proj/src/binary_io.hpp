#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "emdstream/error.hpp"

namespace emdstream::detail {

// Little-endian writer for the sketch blob format (docs/sketch_format.md).
class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }
  void put_bytes(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::span<const std::uint8_t> get_bytes(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::corrupt_blob, "truncated blob");
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline constexpr char kBlobMagic[4] = {'E', 'M', 'D', 'S'};
inline constexpr std::uint8_t kBlobVersion = 1;

enum class BlobKind : std::uint8_t { l1_sketch = 1, l0_sketch = 2, multigrid = 3 };

// magic | version | kind | payload length (u64) | payload
// FNV-1a over the payload.
inline std::uint64_t checksum(std::span<const std::uint8_t> bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::uint8_t b : bytes) h = (h ^ b) * 0x100000001B3ULL;
  return h;
}

inline std::vector<std::uint8_t> frame_blob(BlobKind kind, std::vector<std::uint8_t> payload) {
  ByteWriter w;
  for (char c : kBlobMagic) w.put(static_cast<std::uint8_t>(c));
  w.put(kBlobVersion);
  w.put(static_cast<std::uint8_t>(kind));
  w.put(static_cast<std::uint64_t>(payload.size()));
  w.put_bytes(payload);
  w.put(checksum(payload));
  return std::move(w.bytes());
}

inline std::span<const std::uint8_t> unframe_blob(std::span<const std::uint8_t> blob, BlobKind kind) {
  ByteReader r(blob);
  for (char c : kBlobMagic) {
    if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(c)) {
      throw Error(ErrorCode::corrupt_blob, "bad magic");
    }
  }
  const auto version = r.get<std::uint8_t>();
  if (version != kBlobVersion) {
    throw Error(ErrorCode::corrupt_blob, "unsupported version " + std::to_string(version));
  }
  if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(kind)) {
    throw Error(ErrorCode::corrupt_blob, "unexpected blob kind");
  }
  const auto length = r.get<std::uint64_t>();
  if (length > r.remaining() || r.remaining() - length != sizeof(std::uint64_t)) {
    throw Error(ErrorCode::corrupt_blob, "payload length mismatch");
  }
  const auto payload = r.get_bytes(static_cast<std::size_t>(length));
  if (r.get<std::uint64_t>() != checksum(payload)) throw Error(ErrorCode::corrupt_blob, "checksum mismatch");
  return payload;
}

}  // namespace emdstream::detail
