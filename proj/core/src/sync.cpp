#include "paisa/sync.hpp"

namespace paisa::sync {

using layout::Field;

namespace {

FixedBytes<4> be32(EpochSeconds v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

constexpr std::size_t kReqBody = layout::kDeviceId + layout::kNonce + 4 + layout::kSignature;
constexpr std::size_t kRespBody = layout::kDeviceId + 2 * layout::kNonce + 4 + layout::kSignature;
constexpr std::size_t kAckBody = kRespBody;

}  // namespace

Bytes req_preimage(const wire::DeviceId& id, const wire::Nonce& n_dev1, EpochSeconds ts_prev) {
  const auto ts = be32(ts_prev + 1);
  return crypto::canonical_concat(
      {{Field::device_id, id}, {Field::nonce, n_dev1}, {Field::timestamp, ts}});
}

Bytes resp_preimage(const wire::DeviceId& id, const wire::Nonce& n_dev1,
                    const wire::Nonce& n_svr1, EpochSeconds ts_cur) {
  const auto ts = be32(ts_cur);
  return crypto::canonical_concat({{Field::device_id, id},
                                   {Field::nonce, n_dev1},
                                   {Field::nonce, n_svr1},
                                   {Field::timestamp, ts}});
}

Bytes ack_preimage(const wire::DeviceId& id, const wire::Nonce& n_dev2,
                   const wire::Nonce& n_svr1, EpochSeconds ts_prev) {
  const auto ts = be32(ts_prev);
  return crypto::canonical_concat({{Field::device_id, id},
                                   {Field::nonce, n_dev2},
                                   {Field::nonce, n_svr1},
                                   {Field::timestamp, ts}});
}

crypto::Digest digest(const SyncReq& m) {
  return crypto::sha256(req_preimage(m.device_id, m.n_dev1, m.ts_prev));
}
crypto::Digest digest(const SyncResp& m) {
  return crypto::sha256(resp_preimage(m.device_id, m.n_dev1, m.n_svr1, m.ts_cur));
}
crypto::Digest digest(const SyncAck& m) {
  return crypto::sha256(ack_preimage(m.device_id, m.n_dev2, m.n_svr1, m.ts_prev));
}

Bytes encode(const Message& m) {
  ByteWriter w;
  std::visit(
      [&](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, SyncReq>) {
          w.u8(static_cast<std::uint8_t>(Tag::req)).raw(msg.device_id).raw(msg.n_dev1).u32be(msg.ts_prev);
        } else if constexpr (std::is_same_v<T, SyncResp>) {
          w.u8(static_cast<std::uint8_t>(Tag::resp))
              .raw(msg.device_id)
              .raw(msg.n_dev1)
              .raw(msg.n_svr1)
              .u32be(msg.ts_cur);
        } else {
          w.u8(static_cast<std::uint8_t>(Tag::ack))
              .raw(msg.device_id)
              .raw(msg.n_dev2)
              .raw(msg.n_svr1)
              .u32be(msg.ts_prev);
        }
        w.raw(msg.signature.bytes);
      },
      m);
  return std::move(w).take();
}

std::optional<Message> decode(ByteView datagram) {
  if (datagram.empty()) return std::nullopt;
  ByteReader r(datagram.subspan(1));
  switch (static_cast<Tag>(datagram[0])) {
    case Tag::req: {
      if (r.remaining() != kReqBody) return std::nullopt;
      SyncReq m;
      m.device_id = r.fixed<layout::kDeviceId>();
      m.n_dev1 = r.fixed<layout::kNonce>();
      m.ts_prev = r.u32be();
      m.signature.bytes = r.fixed<layout::kSignature>();
      return m;
    }
    case Tag::resp: {
      if (r.remaining() != kRespBody) return std::nullopt;
      SyncResp m;
      m.device_id = r.fixed<layout::kDeviceId>();
      m.n_dev1 = r.fixed<layout::kNonce>();
      m.n_svr1 = r.fixed<layout::kNonce>();
      m.ts_cur = r.u32be();
      m.signature.bytes = r.fixed<layout::kSignature>();
      return m;
    }
    case Tag::ack: {
      if (r.remaining() != kAckBody) return std::nullopt;
      SyncAck m;
      m.device_id = r.fixed<layout::kDeviceId>();
      m.n_dev2 = r.fixed<layout::kNonce>();
      m.n_svr1 = r.fixed<layout::kNonce>();
      m.ts_prev = r.u32be();
      m.signature.bytes = r.fixed<layout::kSignature>();
      return m;
    }
  }
  return std::nullopt;
}

}  // namespace paisa::sync
