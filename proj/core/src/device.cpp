#include "paisa/device.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace paisa::device {

void TimerConfig::validate() const {
  if (t_announce == 0 || t_attest == 0) throw Error("timer periods must be positive");
  if (t_attest % t_announce != 0) {
    throw Error("t_attest (" + std::to_string(t_attest) + ") must be a multiple of t_announce (" +
                std::to_string(t_announce) + ")");
  }
}

std::string_view to_string(SyncFailure f) {
  switch (f) {
    case SyncFailure::no_request_outstanding: return "no_request_outstanding";
    case SyncFailure::wrong_device: return "wrong_device";
    case SyncFailure::nonce_mismatch: return "nonce_mismatch";
    case SyncFailure::bad_signature: return "bad_signature";
  }
  return "unknown";
}

wire::MacAddress mac_for(const wire::DeviceId& id) {
  wire::MacAddress mac{};
  std::copy_n(id.begin(), mac.size(), mac.begin());
  mac[0] = static_cast<std::uint8_t>((mac[0] & 0xfc) | 0x02);
  return mac;
}

Device::Device(std::unique_ptr<crypto::RandomSource> nonce_source)
    : rng_(nonce_source ? std::move(nonce_source) : std::make_unique<crypto::SystemRandom>()) {}

TrustedState& Device::trusted() {
  if (!trusted_) throw Error("device is not provisioned");
  return *trusted_;
}

const TrustedState& Device::trusted() const {
  if (!trusted_) throw Error("device is not provisioned");
  return *trusted_;
}

const wire::DeviceId& Device::id() const { return trusted().device_id; }
const crypto::PublicKey& Device::public_key() const { return trusted().device_keys.public_key; }
const wire::ShortUrl& Device::short_url() const { return trusted().short_url; }
const TimerConfig& Device::timers() const { return trusted().timers; }
EpochSeconds Device::ts_prev() const { return trusted().ts_prev; }
const crypto::Digest& Device::expected_sw_hash() const { return trusted().sw_hash_expected; }
wire::MacAddress Device::mac() const { return mac_for(id()); }

crypto::PublicKey Device::provision(const ProvisionInputs& in) {
  if (trusted_) throw Error("device is already provisioned");
  in.timers.validate();
  TrustedState t;
  t.device_id = in.device_id;
  t.sw_hash_expected = crypto::hash_chunked(in.sw_dev, kAttestChunk);
  t.mfr_public_key = in.mfr_public_key;
  t.short_url = in.short_url;
  t.full_url = in.full_url;
  t.ts_prev = in.ts_cur;
  t.timers = in.timers;
  t.device_keys = in.key_seed ? crypto::generate_keypair(ByteView(*in.key_seed))
                              : crypto::generate_keypair();
  normal_.program_memory = in.sw_dev;
  trusted_ = std::move(t);
  clock_ = DeviceClock{in.ts_cur, 0};
  return trusted_->device_keys.public_key;
}

sync::SyncReq Device::make_sync_req() {
  const TrustedState& t = trusted();
  sync::SyncReq req;
  req.device_id = t.device_id;
  req.n_dev1 = rng_->bytes<layout::kNonce>();
  req.ts_prev = t.ts_prev;
  req.signature = crypto::sign(t.device_keys.private_key, sync::digest(req));
  outstanding_nonce_ = req.n_dev1;
  return req;
}

std::variant<sync::SyncAck, SyncFailure> Device::handle_sync_resp(const sync::SyncResp& resp,
                                                                  std::uint64_t local_now) {
  TrustedState& t = trusted();
  if (!outstanding_nonce_) return SyncFailure::no_request_outstanding;
  if (resp.device_id != t.device_id) return SyncFailure::wrong_device;
  if (resp.n_dev1 != *outstanding_nonce_) return SyncFailure::nonce_mismatch;
  if (!crypto::verify(t.mfr_public_key, sync::digest(resp), resp.signature)) {
    return SyncFailure::bad_signature;
  }
  outstanding_nonce_.reset();
  t.ts_prev = resp.ts_cur;
  clock_ = DeviceClock{resp.ts_cur, 0};
  synced_at_ = local_now;
  last_announced_.reset();

  sync::SyncAck ack;
  ack.device_id = t.device_id;
  ack.n_dev2 = rng_->bytes<layout::kNonce>();
  ack.n_svr1 = resp.n_svr1;
  ack.ts_prev = t.ts_prev;
  ack.signature = crypto::sign(t.device_keys.private_key, sync::digest(ack));
  return ack;
}

wire::AttReport Device::attest(EpochSeconds now) {
  const TrustedState& t = trusted();
  const crypto::Digest measured = crypto::hash_chunked(normal_.program_memory, kAttestChunk);
  report_ = wire::AttReport{measured == t.sw_hash_expected, now};
  return *report_;
}

wire::AnnouncementMsg Device::make_announcement(const wire::AttReport& report, EpochSeconds now) {
  if (report.timestamp > now) throw Error("attestation report is newer than the announcement");
  const TrustedState& t = trusted();
  wire::AnnouncementMsg msg;
  msg.nonce = rng_->bytes<layout::kNonce>();
  msg.timestamp = now;
  msg.short_url = t.short_url;
  msg.att = report;
  msg.signature = crypto::sign(t.device_keys.private_key, wire::announcement_digest(t.device_id, msg));
  return msg;
}

Bytes Device::announce(EpochSeconds now) {
  if (!report_) attest(now);
  last_announced_ = now;
  return wire::encode_beacon(make_announcement(*report_, now), mac(),
                             clock_.ticks_since_sync * 1'000'000ULL);
}

std::vector<Bytes> Device::finish_boot(std::uint64_t local_now) {
  if (!synced_at_) return {};
  clock_.ticks_since_sync = local_now >= *synced_at_ ? local_now - *synced_at_ : 0;
  const EpochSeconds now = clock_.now();
  attest(now);
  return {announce(now)};
}

std::vector<Bytes> Device::tick(std::uint64_t local_now) {
  std::vector<Bytes> out;
  last_announcements_ = 0;
  if (!trusted_ || !synced_at_ || local_now < *synced_at_) return out;
  clock_.ticks_since_sync = local_now - *synced_at_;
  const EpochSeconds now = clock_.now();
  const TimerConfig& timers = trusted_->timers;

  if (now % timers.t_attest == 0 && (!report_ || report_->timestamp != now)) attest(now);
  if (now % timers.t_announce == 0 && last_announced_ != now) {
    out.push_back(announce(now));
    last_announcements_ = 1;
  }
  // The secure stub forwards normal traffic only after announcements.
  for (std::size_t i = 0; i < kNormalTxPerTick && !normal_.outbox.empty(); ++i) {
    out.push_back(std::move(normal_.outbox.front()));
    normal_.outbox.pop_front();
  }
  return out;
}

BootOutcome Device::boot(SyncTransport& transport, std::uint64_t local_now,
                         const BootPolicy& policy) {
  BootOutcome outcome;
  reset();
  std::uint64_t backoff = policy.initial_backoff;
  for (unsigned attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    outcome.attempts = attempt;
    const auto resp = transport.request(make_sync_req());
    if (resp) {
      auto result = handle_sync_resp(*resp, local_now);
      if (auto* ack = std::get_if<sync::SyncAck>(&result)) {
        transport.acknowledge(*ack);
        outcome.synced = true;
        outcome.synced_at = local_now;
        outcome.frames = finish_boot(local_now);
        return outcome;
      }
      diagnostics_.push_back("sync attempt " + std::to_string(attempt) + " rejected: " +
                             std::string(to_string(std::get<SyncFailure>(result))));
    } else {
      diagnostics_.push_back("sync attempt " + std::to_string(attempt) + " timed out");
    }
    local_now += backoff;
    backoff *= 2;
  }
  outcome.diagnostic = "time sync failed after " + std::to_string(policy.max_attempts) +
                       " attempts; device stays silent";
  diagnostics_.push_back(outcome.diagnostic);
  return outcome;
}

void Device::reset() {
  synced_at_.reset();
  outstanding_nonce_.reset();
  report_.reset();
  last_announced_.reset();
  last_announcements_ = 0;
  if (trusted_) clock_ = DeviceClock{trusted_->ts_prev, 0};
}

void Device::save_state(const std::filesystem::path& path) const {
  const TrustedState& t = trusted();
  nlohmann::ordered_json j;
  j["device_id"] = to_hex(t.device_id);
  j["sw_hash_expected"] = to_hex(t.sw_hash_expected.bytes);
  j["mfr_public_key"] = to_hex(t.mfr_public_key.bytes);
  j["short_url"] = t.short_url.str();
  j["full_url"] = t.full_url;
  j["device_private_key"] = to_hex(t.device_keys.private_key.scalar());
  j["device_public_key"] = to_hex(t.device_keys.public_key.bytes);
  j["ts_prev"] = t.ts_prev;
  j["t_announce"] = t.timers.t_announce;
  j["t_attest"] = t.timers.t_attest;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write device state " + path.string());
  out << j.dump(2) << '\n';
  out.close();
  std::filesystem::permissions(path, std::filesystem::perms::owner_read |
                                         std::filesystem::perms::owner_write);
}

Device Device::load_state(const std::filesystem::path& path,
                          std::unique_ptr<crypto::RandomSource> nonce_source) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open device state " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    TrustedState t;
    t.device_id = fixed_from_hex<layout::kDeviceId>(j.at("device_id").get<std::string>());
    t.sw_hash_expected.bytes = fixed_from_hex<layout::kDigest>(j.at("sw_hash_expected").get<std::string>());
    t.mfr_public_key.bytes = fixed_from_hex<layout::kPublicKey>(j.at("mfr_public_key").get<std::string>());
    t.short_url = wire::ShortUrl(j.at("short_url").get<std::string>());
    t.full_url = j.at("full_url").get<std::string>();
    t.device_keys.private_key =
        crypto::PrivateKey(fixed_from_hex<layout::kPrivateKey>(j.at("device_private_key").get<std::string>()));
    t.device_keys.public_key = crypto::derive_public_key(t.device_keys.private_key);
    t.ts_prev = j.at("ts_prev").get<EpochSeconds>();
    t.timers.t_announce = j.at("t_announce").get<std::uint32_t>();
    t.timers.t_attest = j.at("t_attest").get<std::uint32_t>();
    t.timers.validate();
    Device d(std::move(nonce_source));
    d.clock_ = DeviceClock{t.ts_prev, 0};
    d.trusted_ = std::move(t);
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace paisa::device
