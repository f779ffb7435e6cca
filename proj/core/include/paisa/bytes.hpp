#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace paisa {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

template <std::size_t N>
using FixedBytes = std::array<std::uint8_t, N>;

/// Seconds since the Unix epoch, as carried on the wire (4 bytes, big-endian).
using EpochSeconds = std::uint32_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_hex(ByteView bytes);

/// Parses an even-length hex string (whitespace ignored). Throws Error on bad input.
Bytes from_hex(std::string_view hex);

template <std::size_t N>
FixedBytes<N> fixed_from_hex(std::string_view hex) {
  const Bytes raw = from_hex(hex);
  if (raw.size() != N) {
    throw Error("hex value has " + std::to_string(raw.size()) + " bytes, expected " +
                std::to_string(N));
  }
  FixedBytes<N> out{};
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Appends big-endian integers and raw byte runs to a growing buffer.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(std::size_t reserve) { buf_.reserve(reserve); }

  ByteWriter& u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
  }
  ByteWriter& u16be(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    buf_.push_back(static_cast<std::uint8_t>(v));
    return *this;
  }
  ByteWriter& u16le(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    return *this;
  }
  ByteWriter& u32be(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  ByteWriter& u32le(std::uint32_t v) {
    for (int shift = 0; shift <= 24; shift += 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  ByteWriter& u64le(std::uint64_t v) {
    for (int shift = 0; shift <= 56; shift += 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  ByteWriter& raw(ByteView bytes) {
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
    return *this;
  }

  [[nodiscard]] std::size_t size() const { return buf_.size(); }
  [[nodiscard]] const Bytes& bytes() const& { return buf_; }
  [[nodiscard]] Bytes take() && { return std::move(buf_); }

 private:
  Bytes buf_;
};

/// Bounds-checked cursor over untrusted input. Reads past the end set a sticky
/// failure flag instead of throwing, so adversarial bytes can be parsed totally.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  [[nodiscard]] bool ok() const { return ok_; }
  [[nodiscard]] std::size_t remaining() const { return ok_ ? data_.size() - pos_ : 0; }
  [[nodiscard]] std::size_t position() const { return pos_; }

  std::uint8_t u8() {
    if (!need(1)) return 0;
    return data_[pos_++];
  }
  std::uint16_t u16be() {
    if (!need(2)) return 0;
    const auto v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint16_t u16le() {
    if (!need(2)) return 0;
    const auto v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32be() {
    if (!need(4)) return 0;
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::uint32_t u32le() {
    if (!need(4)) return 0;
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
  }
  ByteView take(std::size_t n) {
    if (!need(n)) return {};
    ByteView out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  template <std::size_t N>
  FixedBytes<N> fixed() {
    FixedBytes<N> out{};
    ByteView v = take(N);
    if (ok_) std::copy(v.begin(), v.end(), out.begin());
    return out;
  }

 private:
  bool need(std::size_t n) {
    if (!ok_ || data_.size() - pos_ < n) {
      ok_ = false;
      return false;
    }
    return true;
  }

  ByteView data_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

}  // namespace paisa
