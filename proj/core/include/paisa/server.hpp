#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "paisa/crypto.hpp"
#include "paisa/device.hpp"
#include "paisa/manifest.hpp"
#include "paisa/sync.hpp"

namespace paisa::server {

struct DeviceRecord {
  wire::DeviceId device_id{};
  crypto::PublicKey device_public_key;
  EpochSeconds latest_ts = 0;
  std::string manifest_path;
  friend bool operator==(const DeviceRecord&, const DeviceRecord&) = default;
};

/// Human-readable part of a manifest, supplied by the manufacturer.
struct Description {
  std::string device_type_model;
  std::string manufacturer;
  std::string manufacture_date_location;
  std::vector<std::string> sensors;
  std::vector<std::string> actuators;
  std::string deployment_purpose;
  std::vector<std::string> network_interfaces;
  std::string owner_id;
  std::string deployment_location;
};

struct RegistrationInputs {
  wire::DeviceId device_id{};
  Bytes sw_dev;
  Description description;
  EpochSeconds ts_cur = 0;
  device::TimerConfig timers;
  manifest::Status status = manifest::Status::active;
  std::optional<FixedBytes<32>> device_key_seed;
};

struct Registration {
  manifest::Manifest manifest;
  DeviceRecord record;
  wire::ShortUrl short_url;
};

enum class Rejection {
  unknown_device,
  timestamp_mismatch,
  bad_signature,
  unknown_session,
  wrong_device,
};
std::string_view to_string(Rejection r);

struct Committed {
  wire::DeviceId device_id{};
  EpochSeconds latest_ts = 0;
};

struct ServerOptions {
  std::uint32_t session_ttl = 60;  // seconds a SyncResp may wait for its SyncAck
  /// Prefix for manifest URLs, e.g. "http://mfr.example:8080" or "file:///srv/store".
  std::string base_url = "http://manufacturer.example";
  /// When set, records, registry and manifests are persisted here.
  std::optional<std::filesystem::path> store_dir;
};

/// Manufacturer server: provisioning, the Time Sync responder with its
/// per-device timestamp map, the URL shortener and manifest hosting.
/// All public members are safe to call concurrently.
class ManufacturerServer {
 public:
  ManufacturerServer(crypto::KeyPair keys, ServerOptions options,
                     std::unique_ptr<crypto::RandomSource> rng = nullptr);

  /// Reloads a persisted store. Throws Error if the directory is unreadable.
  static std::unique_ptr<ManufacturerServer> open(crypto::KeyPair keys, const std::filesystem::path& store_dir,
                                 std::string base_url,
                                 std::unique_ptr<crypto::RandomSource> rng = nullptr);

  /// Provisions `dev`, signs and hosts its manifest, registers the short URL.
  /// Throws Error on a duplicate device id.
  Registration register_device(device::Device& dev, const RegistrationInputs& in);

  std::variant<sync::SyncResp, Rejection> handle_sync_req(const sync::SyncReq& req,
                                                          EpochSeconds now);
  std::variant<Committed, Rejection> handle_sync_ack(const sync::SyncAck& ack, EpochSeconds now);

  /// Datagram front end: decodes, dispatches and encodes a reply (if any).
  std::optional<Bytes> handle_datagram(ByteView datagram, EpochSeconds now);

  /// Stored manifest document, byte-identical to what was signed and published.
  [[nodiscard]] std::optional<std::string> serve_manifest(std::string_view path) const;
  [[nodiscard]] std::optional<std::string> resolve(const wire::ShortUrl& key) const;

  /// Re-signs a device's manifest with a new status (e.g. reported stolen).
  void set_status(const wire::DeviceId& id, manifest::Status status);

  [[nodiscard]] std::optional<DeviceRecord> record(const wire::DeviceId& id) const;
  [[nodiscard]] const crypto::PublicKey& public_key() const { return keys_.public_key; }
  [[nodiscard]] std::string full_url_for(std::string_view path) const;
  [[nodiscard]] const std::string& base_url() const { return options_.base_url; }
  [[nodiscard]] std::size_t pending_sessions() const;
  [[nodiscard]] manifest::ShortUrlRegistry registry() const;

  static std::string manifest_path_for(const wire::DeviceId& id);

 private:
  struct Session {
    wire::DeviceId device_id{};
    EpochSeconds ts_cur = 0;
    EpochSeconds created_at = 0;
  };

  void expire_sessions(EpochSeconds now);
  wire::Nonce fresh_server_nonce();
  void persist_records() const;
  void persist_manifest(const std::string& path, const std::string& doc) const;

  crypto::KeyPair keys_;
  ServerOptions options_;
  std::unique_ptr<crypto::RandomSource> rng_;

  mutable std::mutex mu_;
  std::map<wire::DeviceId, DeviceRecord> records_;
  std::map<wire::DeviceId, manifest::Manifest> manifests_;
  std::map<std::string, std::string, std::less<>> documents_;  // path -> JSON
  std::map<wire::Nonce, Session> sessions_;
  manifest::ShortUrlRegistry registry_;
  std::uint64_t nonce_counter_ = 0;
};

}  // namespace paisa::server
