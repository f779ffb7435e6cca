#include "paisa/wire.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace paisa::wire {

ShortUrl::ShortUrl(std::string_view s) {
  if (!is_valid(as_bytes(s))) {
    throw Error("short URL must be exactly 11 printable ASCII characters: '" + std::string(s) + "'");
  }
  std::copy(s.begin(), s.end(), value_.begin());
}

bool ShortUrl::is_valid(ByteView raw) {
  return raw.size() == layout::kShortUrl &&
         std::all_of(raw.begin(), raw.end(), [](std::uint8_t c) { return c >= 0x20 && c <= 0x7e; });
}

Bytes announcement_preimage(const DeviceId& device_id, const Nonce& nonce, EpochSeconds ts,
                            const ShortUrl& url, const AttReport& att) {
  ByteWriter tsb, attb;
  tsb.u32be(ts);
  attb.u8(att.passed ? 1 : 0).u32be(att.timestamp);
  using layout::Field;
  return crypto::canonical_concat({{Field::device_id, device_id},
                                   {Field::nonce, nonce},
                                   {Field::timestamp, tsb.bytes()},
                                   {Field::short_url, url.bytes()},
                                   {Field::att_report, attb.bytes()}});
}

crypto::Digest announcement_digest(const DeviceId& device_id, const AnnouncementMsg& msg) {
  return crypto::sha256(
      announcement_preimage(device_id, msg.nonce, msg.timestamp, msg.short_url, msg.att));
}

std::string_view to_string(DecodeError e) {
  switch (e) {
    case DecodeError::wrong_length: return "wrong_length";
    case DecodeError::bad_short_url: return "bad_short_url";
    case DecodeError::bad_att_result: return "bad_att_result";
    case DecodeError::att_after_timestamp: return "att_after_timestamp";
  }
  return "unknown";
}

Bytes encode_announcement(const AnnouncementMsg& msg) {
  if (msg.att.timestamp > msg.timestamp) {
    throw Error("attestation timestamp is later than the announcement timestamp");
  }
  ByteWriter w(layout::kAnnouncement);
  w.raw(msg.nonce)
      .u32be(msg.timestamp)
      .raw(msg.short_url.bytes())
      .u8(msg.att.passed ? 1 : 0)
      .u32be(msg.att.timestamp)
      .raw(msg.signature.bytes);
  return std::move(w).take();
}

std::variant<AnnouncementMsg, DecodeError> decode_announcement(ByteView bytes) {
  if (bytes.size() != layout::kAnnouncement) return DecodeError::wrong_length;
  ByteReader r(bytes);
  AnnouncementMsg msg;
  msg.nonce = r.fixed<layout::kNonce>();
  msg.timestamp = r.u32be();
  ByteView url = r.take(layout::kShortUrl);
  if (!ShortUrl::is_valid(url)) return DecodeError::bad_short_url;
  msg.short_url = ShortUrl(std::string_view(reinterpret_cast<const char*>(url.data()), url.size()));
  const std::uint8_t result = r.u8();
  if (result > 1) return DecodeError::bad_att_result;
  msg.att.passed = result == 1;
  msg.att.timestamp = r.u32be();
  if (msg.att.timestamp > msg.timestamp) return DecodeError::att_after_timestamp;
  msg.signature.bytes = r.fixed<layout::kSignature>();
  return msg;
}

Bytes encode_beacon(const AnnouncementMsg& msg, const MacAddress& device_mac,
                    std::uint64_t tsf_microseconds) {
  const Bytes payload = encode_announcement(msg);
  ByteWriter w(layout::kBeacon);
  // Management header: beacon subtype, broadcast destination, device as SA and BSSID.
  w.u8(0x80).u8(0x00).u16le(0);
  for (int i = 0; i < 6; ++i) w.u8(0xff);
  w.raw(device_mac).raw(device_mac).u16le(0);
  w.u64le(tsf_microseconds).u16le(layout::kBeaconIntervalTu).u16le(layout::kCapabilityInfo);
  w.u8(layout::kSsidTag).u8(static_cast<std::uint8_t>(layout::kPaisaSsid.size()))
      .raw(as_bytes(layout::kPaisaSsid));
  w.u8(layout::kRatesTag).u8(sizeof(layout::kSupportedRates)).raw(layout::kSupportedRates);
  w.u8(layout::kVendorTag).u8(static_cast<std::uint8_t>(layout::kVendorPayload))
      .raw(layout::kOui)
      .raw(payload);
  return std::move(w).take();
}

std::string_view to_string(NotPaisa v) {
  switch (v) {
    case NotPaisa::not_beacon: return "not_beacon";
    case NotPaisa::wrong_ssid: return "wrong_ssid";
    case NotPaisa::missing_vendor_element: return "missing_vendor_element";
    case NotPaisa::malformed: return "malformed";
  }
  return "unknown";
}

namespace {

struct Element {
  std::uint8_t tag;
  ByteView value;
};

// Returns false if the element list runs past the end of the frame.
bool parse_elements(ByteView body, std::vector<Element>& out) {
  ByteReader r(body);
  while (r.remaining() > 0) {
    const std::uint8_t tag = r.u8();
    const std::uint8_t len = r.u8();
    ByteView value = r.take(len);
    if (!r.ok()) return false;
    out.push_back({tag, value});
  }
  return r.ok();
}

bool is_paisa_vendor(const Element& e) {
  return e.tag == layout::kVendorTag && e.value.size() >= sizeof(layout::kOui) &&
         std::equal(std::begin(layout::kOui), std::end(layout::kOui), e.value.begin());
}

}  // namespace

std::variant<DecodedBeacon, NotPaisa> decode_beacon(ByteView frame) noexcept {
  try {
    if (frame.size() < 2) return NotPaisa::malformed;
    // Frame control: version 0, type management (0), subtype beacon (8).
    if (frame[0] != 0x80) return NotPaisa::not_beacon;
    if (frame.size() < layout::kMacHeader + layout::kFixedParams) return NotPaisa::malformed;

    DecodedBeacon out;
    std::copy_n(frame.begin() + 10, layout::kMacAddress, out.source.begin());

    std::vector<Element> elements;
    const bool complete =
        parse_elements(frame.subspan(layout::kMacHeader + layout::kFixedParams), elements);

    const auto ssid = std::find_if(elements.begin(), elements.end(),
                                   [](const Element& e) { return e.tag == layout::kSsidTag; });
    if (ssid == elements.end()) return complete ? NotPaisa::wrong_ssid : NotPaisa::malformed;
    if (!std::equal(ssid->value.begin(), ssid->value.end(), layout::kPaisaSsid.begin(),
                    layout::kPaisaSsid.end())) {
      return NotPaisa::wrong_ssid;
    }

    const auto vendor = std::find_if(elements.begin(), elements.end(), is_paisa_vendor);
    if (vendor == elements.end()) {
      return complete ? NotPaisa::missing_vendor_element : NotPaisa::malformed;
    }
    if (!complete) return NotPaisa::malformed;

    auto decoded = decode_announcement(vendor->value.subspan(sizeof(layout::kOui)));
    if (const auto* msg = std::get_if<AnnouncementMsg>(&decoded)) {
      out.msg = *msg;
      return out;
    }
    return NotPaisa::malformed;
  } catch (...) {
    return NotPaisa::malformed;
  }
}

std::string hexdump(ByteView bytes) {
  std::ostringstream os;
  char line[8];
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (i % 16 == 0) {
      if (i) os << '\n';
      std::snprintf(line, sizeof(line), "%04zx ", i);
      os << line;
    }
    std::snprintf(line, sizeof(line), " %02x", bytes[i]);
    os << line;
  }
  os << '\n';
  return os.str();
}

std::string hexdump_beacon(ByteView frame) {
  std::ostringstream os;
  if (frame.size() < layout::kMacHeader + layout::kFixedParams) {
    os << "truncated frame (" << frame.size() << " bytes)\n" << hexdump(frame);
    return os.str();
  }
  os << "header   " << to_hex(frame.first(layout::kMacHeader)) << '\n';
  os << "fixed    " << to_hex(frame.subspan(layout::kMacHeader, layout::kFixedParams)) << '\n';
  std::vector<Element> elements;
  const bool complete =
      parse_elements(frame.subspan(layout::kMacHeader + layout::kFixedParams), elements);
  for (const Element& e : elements) {
    char tag[24];
    std::snprintf(tag, sizeof(tag), "elem %02x/%-3zu", e.tag, e.value.size());
    os << tag << ' ' << to_hex(e.value) << '\n';
  }
  if (!complete) os << "(element list truncated)\n";
  return os.str();
}

std::string format_mac(const MacAddress& mac) {
  std::string out;
  char part[4];
  for (std::size_t i = 0; i < mac.size(); ++i) {
    std::snprintf(part, sizeof(part), i ? ":%02x" : "%02x", mac[i]);
    out += part;
  }
  return out;
}

}  // namespace paisa::wire
