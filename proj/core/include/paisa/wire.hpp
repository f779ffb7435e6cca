#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "paisa/bytes.hpp"
#include "paisa/crypto.hpp"
#include "paisa/layout.hpp"

namespace paisa::wire {

/// 11 printable ASCII bytes naming the manifest location.
class ShortUrl {
 public:
  ShortUrl() { value_.fill(' '); }
  /// Throws Error unless `s` is exactly 11 printable ASCII characters.
  explicit ShortUrl(std::string_view s);
  static bool is_valid(ByteView raw);

  [[nodiscard]] std::string str() const { return {value_.begin(), value_.end()}; }
  [[nodiscard]] const FixedBytes<layout::kShortUrl>& bytes() const { return value_; }
  friend bool operator==(const ShortUrl&, const ShortUrl&) = default;
  friend auto operator<=>(const ShortUrl& a, const ShortUrl& b) { return a.value_ <=> b.value_; }

 private:
  FixedBytes<layout::kShortUrl> value_{};
};

using DeviceId = FixedBytes<layout::kDeviceId>;
using Nonce = FixedBytes<layout::kNonce>;
using MacAddress = FixedBytes<layout::kMacAddress>;

struct AttReport {
  bool passed = false;
  EpochSeconds timestamp = 0;
  friend bool operator==(const AttReport&, const AttReport&) = default;
};

/// Msg_anno as broadcast by a device.
struct AnnouncementMsg {
  Nonce nonce{};
  EpochSeconds timestamp = 0;
  ShortUrl short_url;
  AttReport att;
  crypto::Signature signature;
  friend bool operator==(const AnnouncementMsg&, const AnnouncementMsg&) = default;
};

/// Signed preimage of an announcement: device_id || nonce || ts || url || att (68 bytes).
Bytes announcement_preimage(const DeviceId& device_id, const Nonce& nonce, EpochSeconds ts,
                            const ShortUrl& url, const AttReport& att);
crypto::Digest announcement_digest(const DeviceId& device_id, const AnnouncementMsg& msg);

enum class DecodeError {
  wrong_length,
  bad_short_url,
  bad_att_result,
  att_after_timestamp,
};
std::string_view to_string(DecodeError e);

/// Exactly 116 bytes. Throws Error if att.timestamp > timestamp.
Bytes encode_announcement(const AnnouncementMsg& msg);
std::variant<AnnouncementMsg, DecodeError> decode_announcement(ByteView bytes);

/// A beacon frame carrying one announcement in its vendor-specific element.
Bytes encode_beacon(const AnnouncementMsg& msg, const MacAddress& device_mac,
                    std::uint64_t tsf_microseconds = 0);

enum class NotPaisa {
  not_beacon,
  wrong_ssid,
  missing_vendor_element,
  malformed,
};
std::string_view to_string(NotPaisa v);

struct DecodedBeacon {
  AnnouncementMsg msg;
  MacAddress source{};
  friend bool operator==(const DecodedBeacon&, const DecodedBeacon&) = default;
};

/// Total over arbitrary input: never throws.
std::variant<DecodedBeacon, NotPaisa> decode_beacon(ByteView frame) noexcept;

/// Annotated hex rendering of a beacon, one element per line.
std::string hexdump_beacon(ByteView frame);
std::string hexdump(ByteView bytes);

std::string format_mac(const MacAddress& mac);

}  // namespace paisa::wire
