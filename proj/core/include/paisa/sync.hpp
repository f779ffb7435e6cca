#pragma once

#include <optional>
#include <variant>

#include "paisa/crypto.hpp"
#include "paisa/wire.hpp"

// Time Sync messages exchanged between a booting device and the manufacturer
// server, and their datagram framing (1-byte type tag + fixed-width body).
namespace paisa::sync {

struct SyncReq {
  wire::DeviceId device_id{};
  wire::Nonce n_dev1{};
  EpochSeconds ts_prev = 0;
  crypto::Signature signature;
  friend bool operator==(const SyncReq&, const SyncReq&) = default;
};

struct SyncResp {
  wire::DeviceId device_id{};
  wire::Nonce n_dev1{};
  wire::Nonce n_svr1{};
  EpochSeconds ts_cur = 0;
  crypto::Signature signature;
  friend bool operator==(const SyncResp&, const SyncResp&) = default;
};

struct SyncAck {
  wire::DeviceId device_id{};
  wire::Nonce n_dev2{};
  wire::Nonce n_svr1{};
  EpochSeconds ts_prev = 0;
  crypto::Signature signature;
  friend bool operator==(const SyncAck&, const SyncAck&) = default;
};

using Message = std::variant<SyncReq, SyncResp, SyncAck>;

enum class Tag : std::uint8_t { req = 0x01, resp = 0x02, ack = 0x03 };

/// The request signs ts_prev + 1 while transmitting ts_prev.
Bytes req_preimage(const wire::DeviceId& id, const wire::Nonce& n_dev1, EpochSeconds ts_prev);
Bytes resp_preimage(const wire::DeviceId& id, const wire::Nonce& n_dev1,
                    const wire::Nonce& n_svr1, EpochSeconds ts_cur);
Bytes ack_preimage(const wire::DeviceId& id, const wire::Nonce& n_dev2,
                   const wire::Nonce& n_svr1, EpochSeconds ts_prev);

crypto::Digest digest(const SyncReq& m);
crypto::Digest digest(const SyncResp& m);
crypto::Digest digest(const SyncAck& m);

Bytes encode(const Message& m);
/// Nullopt for unknown tags or wrong body lengths.
std::optional<Message> decode(ByteView datagram);

}  // namespace paisa::sync
