#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Declared field widths for every fixed-width value that appears on the wire
// or inside a signed hash preimage.
namespace paisa::layout {

inline constexpr std::size_t kDeviceId = 16;
inline constexpr std::size_t kNonce = 32;
inline constexpr std::size_t kTimestamp = 4;
inline constexpr std::size_t kShortUrl = 11;
inline constexpr std::size_t kAttResult = 1;
inline constexpr std::size_t kAttTimestamp = 4;
inline constexpr std::size_t kAttReport = kAttResult + kAttTimestamp;
inline constexpr std::size_t kSignature = 64;
inline constexpr std::size_t kDigest = 32;
inline constexpr std::size_t kPublicKey = 64;
inline constexpr std::size_t kPrivateKey = 32;
inline constexpr std::size_t kMacAddress = 6;

inline constexpr std::size_t kAnnouncement =
    kNonce + kTimestamp + kShortUrl + kAttReport + kSignature;  // 116

// 802.11 beacon layout.
inline constexpr std::size_t kMacHeader = 24;
inline constexpr std::size_t kFixedParams = 12;
inline constexpr std::uint8_t kSsidTag = 0x00;
inline constexpr std::uint8_t kRatesTag = 0x01;
inline constexpr std::uint8_t kVendorTag = 0xdd;
inline constexpr std::string_view kPaisaSsid = "PAISA";
inline constexpr std::uint8_t kOui[3] = {0x00, 0x14, 0x6c};
inline constexpr std::uint8_t kSupportedRates[8] = {0x82, 0x84, 0x8b, 0x96, 0x24, 0x30, 0x48, 0x6c};
inline constexpr std::size_t kVendorPayload = sizeof(kOui) + kAnnouncement;  // 119
inline constexpr std::uint16_t kBeaconIntervalTu = 100;
inline constexpr std::uint16_t kCapabilityInfo = 0x0431;

inline constexpr std::size_t kBeacon = kMacHeader + kFixedParams + 2 + kPaisaSsid.size() + 2 +
                                       sizeof(kSupportedRates) + 2 + kVendorPayload;

/// Every kind of field that may be placed in a canonical hash preimage.
enum class Field : std::uint8_t {
  device_id,
  nonce,
  timestamp,
  short_url,
  att_report,
};

constexpr std::size_t width(Field f) {
  switch (f) {
    case Field::device_id: return kDeviceId;
    case Field::nonce: return kNonce;
    case Field::timestamp: return kTimestamp;
    case Field::short_url: return kShortUrl;
    case Field::att_report: return kAttReport;
  }
  return 0;
}

constexpr std::string_view name(Field f) {
  switch (f) {
    case Field::device_id: return "device_id";
    case Field::nonce: return "nonce";
    case Field::timestamp: return "timestamp";
    case Field::short_url: return "short_url";
    case Field::att_report: return "att_report";
  }
  return "?";
}

}  // namespace paisa::layout
