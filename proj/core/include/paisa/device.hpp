#pragma once

#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "paisa/crypto.hpp"
#include "paisa/sync.hpp"
#include "paisa/wire.hpp"

namespace paisa::device {

inline constexpr std::size_t kAttestChunk = 4096;

struct TimerConfig {
  std::uint32_t t_announce = 10;
  std::uint32_t t_attest = 10;

  /// Throws Error unless both periods are positive and t_attest is a multiple of t_announce.
  void validate() const;
  friend bool operator==(const TimerConfig&, const TimerConfig&) = default;
};

/// Program memory and traffic of the untrusted application. This is the only
/// part of a device an adversary can reach.
struct NormalSoftware {
  Bytes program_memory;
  bool compromised = false;  // informational test hook; attestation measures memory
  bool busy = false;
  std::deque<Bytes> outbox;  // normal application traffic awaiting the radio
};

/// ts_dev = base_ts + ticks_since_sync.
struct DeviceClock {
  EpochSeconds base_ts = 0;
  std::uint64_t ticks_since_sync = 0;
  [[nodiscard]] EpochSeconds now() const {
    return static_cast<EpochSeconds>(base_ts + ticks_since_sync);
  }
};

/// Contents of the secure region. Only Device touches it.
struct TrustedState {
  wire::DeviceId device_id{};
  crypto::Digest sw_hash_expected;
  crypto::PublicKey mfr_public_key;
  wire::ShortUrl short_url;
  std::string full_url;
  crypto::KeyPair device_keys;
  EpochSeconds ts_prev = 0;
  TimerConfig timers;
};

struct ProvisionInputs {
  wire::DeviceId device_id{};
  Bytes sw_dev;
  crypto::PublicKey mfr_public_key;
  wire::ShortUrl short_url;
  std::string full_url;
  EpochSeconds ts_cur = 0;
  TimerConfig timers;
  /// Seeds key generation for reproducible runs; CSPRNG when absent.
  std::optional<FixedBytes<32>> key_seed;
};

enum class SyncFailure { no_request_outstanding, wrong_device, nonce_mismatch, bad_signature };
std::string_view to_string(SyncFailure f);

struct BootPolicy {
  unsigned max_attempts = 5;
  std::uint64_t initial_backoff = 1;  // seconds, doubled after every failed attempt
};

/// Carries one Time Sync round trip for the blocking boot() helper.
class SyncTransport {
 public:
  virtual ~SyncTransport() = default;
  /// Sends the request; returns the response or nullopt on timeout/loss.
  virtual std::optional<sync::SyncResp> request(const sync::SyncReq& req) = 0;
  virtual void acknowledge(const sync::SyncAck& ack) = 0;
};

struct BootOutcome {
  bool synced = false;
  unsigned attempts = 0;
  std::uint64_t synced_at = 0;  // local virtual second at which the clock was set
  std::vector<Bytes> frames;    // first announcement
  std::string diagnostic;
};

/// Emulated IoT device: a TCB (trusted state, secure timer, attestation,
/// announcement) plus untrusted normal software.
class Device {
 public:
  static constexpr std::size_t kNormalTxPerTick = 4;

  explicit Device(std::unique_ptr<crypto::RandomSource> nonce_source = nullptr);

  Device(const Device&) = delete;
  Device& operator=(const Device&) = delete;
  Device(Device&&) noexcept = default;
  Device& operator=(Device&&) noexcept = default;

  /// Installs SW_dev and the trusted state, generates the device key pair
  /// internally and returns only its public half. Throws Error if already provisioned.
  crypto::PublicKey provision(const ProvisionInputs& in);

  [[nodiscard]] bool provisioned() const { return trusted_.has_value(); }
  [[nodiscard]] bool synced() const { return synced_at_.has_value(); }
  [[nodiscard]] const wire::DeviceId& id() const;
  [[nodiscard]] const crypto::PublicKey& public_key() const;
  [[nodiscard]] const wire::ShortUrl& short_url() const;
  [[nodiscard]] const TimerConfig& timers() const;
  [[nodiscard]] EpochSeconds ts_prev() const;
  [[nodiscard]] const crypto::Digest& expected_sw_hash() const;
  [[nodiscard]] wire::MacAddress mac() const;
  [[nodiscard]] DeviceClock clock() const { return clock_; }
  [[nodiscard]] const std::optional<wire::AttReport>& latest_report() const { return report_; }
  [[nodiscard]] const std::vector<std::string>& diagnostics() const { return diagnostics_; }

  NormalSoftware& normal_software() { return normal_; }
  [[nodiscard]] const NormalSoftware& normal_software() const { return normal_; }

  // --- Time Sync (device side) ---

  /// Starts a sync attempt with a fresh n_dev1; supersedes any outstanding one.
  sync::SyncReq make_sync_req();
  /// On success sets ts_prev, restarts the secure timer at `local_now` and
  /// returns the SyncAck. Failures leave all state untouched.
  std::variant<sync::SyncAck, SyncFailure> handle_sync_resp(const sync::SyncResp& resp,
                                                            std::uint64_t local_now);

  // --- Runtime ---

  /// Measures program memory against the provisioned hash and stores the report.
  wire::AttReport attest(EpochSeconds now);
  wire::AnnouncementMsg make_announcement(const wire::AttReport& report, EpochSeconds now);

  /// First announcement after a successful sync: attest, announce, and mark the
  /// current second as served so tick() does not repeat it.
  std::vector<Bytes> finish_boot(std::uint64_t local_now);

  /// Secure timer interrupt for local second `local_now`. Returns beacon frames
  /// followed by at most kNormalTxPerTick normal-software packets. Emits
  /// nothing while unsynced.
  std::vector<Bytes> tick(std::uint64_t local_now);
  /// Number of leading entries of the last tick() result that are announcements.
  [[nodiscard]] std::size_t last_announcement_count() const { return last_announcements_; }

  /// Blocking boot: Time Sync with retries and doubling backoff, then the first
  /// announcement. An exhausted retry budget leaves the device silent.
  BootOutcome boot(SyncTransport& transport, std::uint64_t local_now, const BootPolicy& policy = {});

  /// SecureFault analog: volatile state is lost, the trusted state persists,
  /// and the device must boot again before it announces.
  void reset();

  void save_state(const std::filesystem::path& path) const;
  static Device load_state(const std::filesystem::path& path,
                           std::unique_ptr<crypto::RandomSource> nonce_source = nullptr);

 private:
  TrustedState& trusted();
  [[nodiscard]] const TrustedState& trusted() const;
  Bytes announce(EpochSeconds now);

  std::unique_ptr<crypto::RandomSource> rng_;
  std::optional<TrustedState> trusted_;
  NormalSoftware normal_;
  DeviceClock clock_;
  std::optional<std::uint64_t> synced_at_;
  std::optional<wire::Nonce> outstanding_nonce_;
  std::optional<wire::AttReport> report_;
  std::optional<EpochSeconds> last_announced_;
  std::size_t last_announcements_ = 0;
  std::vector<std::string> diagnostics_;
};

/// Locally administered unicast MAC derived from the device id.
wire::MacAddress mac_for(const wire::DeviceId& id);

}  // namespace paisa::device
