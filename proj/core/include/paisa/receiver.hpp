#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "paisa/manifest.hpp"
#include "paisa/wire.hpp"

namespace paisa::server {
class ManufacturerServer;
}

namespace paisa::receiver {

enum class Freshness { fresh, stale, future };
std::string_view to_string(Freshness f);

enum class Verdict {
  verified,
  stale,
  future,
  bad_manifest_signature,
  bad_announcement_signature,
  revoked,
  redirect_mismatch,
  compromised,
  fetch_failed,
};
std::string_view to_string(Verdict v);
std::optional<Verdict> verdict_from_string(std::string_view s);

struct Retrieved {
  std::string full_url;  // where the short URL pointed
  std::string document;
};

/// Resolves short URLs and downloads manifests. retrieve() counts every call.
class ManifestFetcher {
 public:
  virtual ~ManifestFetcher() = default;
  std::optional<Retrieved> retrieve(const wire::ShortUrl& key);
  [[nodiscard]] std::size_t calls() const { return calls_.load(); }

 protected:
  virtual std::optional<std::string> resolve(const wire::ShortUrl& key) = 0;
  virtual std::optional<std::string> fetch(const std::string& full_url) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
};

/// Talks to a ManufacturerServer in the same process.
class ServerFetcher : public ManifestFetcher {
 public:
  explicit ServerFetcher(const server::ManufacturerServer& srv) : srv_(srv) {}

 protected:
  std::optional<std::string> resolve(const wire::ShortUrl& key) override;
  std::optional<std::string> fetch(const std::string& full_url) override;

 private:
  const server::ManufacturerServer& srv_;
};

/// Reads a server store directory (registry.json plus manifests/) directly.
class StoreFetcher : public ManifestFetcher {
 public:
  explicit StoreFetcher(std::filesystem::path store_dir);

 protected:
  std::optional<std::string> resolve(const wire::ShortUrl& key) override;
  std::optional<std::string> fetch(const std::string& full_url) override;

 private:
  std::filesystem::path dir_;
  manifest::ShortUrlRegistry registry_;
};

struct ReceiverConfig {
  std::uint32_t epsilon = 10;     // seconds
  std::uint32_t future_skew = 2;  // seconds
  ManifestFetcher* fetcher = nullptr;
  /// Accept only manifests signed by one of these keys; empty means any key.
  std::vector<crypto::PublicKey> pinned_mfr_keys;
};

Freshness check_freshness(EpochSeconds ts_dev, EpochSeconds ts_udev, std::uint32_t epsilon,
                          std::uint32_t future_skew);
inline Freshness check_freshness(EpochSeconds ts_dev, EpochSeconds ts_udev, const ReceiverConfig& cfg) {
  return check_freshness(ts_dev, ts_udev, cfg.epsilon, cfg.future_skew);
}

struct ManifestSummary {
  std::string device_type_model;
  std::string manufacturer;
  std::vector<std::string> sensors;
  std::vector<std::string> actuators;
  std::string deployment_purpose;
  std::string deployment_location;
  manifest::Status status = manifest::Status::active;
  friend bool operator==(const ManifestSummary&, const ManifestSummary&) = default;
};

struct PresenceReport {
  std::optional<wire::DeviceId> device_id;  // known once a manifest was retrieved
  wire::MacAddress source{};
  wire::ShortUrl short_url;
  std::optional<ManifestSummary> manifest;
  bool att_result = false;
  EpochSeconds att_timestamp = 0;
  EpochSeconds announcement_ts = 0;
  EpochSeconds received_at = 0;
  Verdict verdict = Verdict::fetch_failed;
  std::string detail;
  friend bool operator==(const PresenceReport&, const PresenceReport&) = default;
};

using FrameResult = std::variant<PresenceReport, wire::NotPaisa>;

/// Stateless pipeline. The first failing stage decides the verdict.
FrameResult process_frame(ByteView frame, const ReceiverConfig& cfg, EpochSeconds now);

/// Frame already reported within the last epsilon seconds.
struct Duplicate {
  EpochSeconds first_seen = 0;
};

using ScanResult = std::variant<PresenceReport, wire::NotPaisa, Duplicate>;

/// process_frame plus a manifest cache and duplicate suppression, both
/// bounded by epsilon. Safe to call from several threads.
class Receiver {
 public:
  explicit Receiver(ReceiverConfig cfg);

  ScanResult process(ByteView frame, EpochSeconds now);
  [[nodiscard]] const ReceiverConfig& config() const { return cfg_; }

 private:
  struct CacheEntry {
    EpochSeconds fetched_at = 0;
    Retrieved doc;
  };
  std::optional<Retrieved> cached(const wire::ShortUrl& key, EpochSeconds now);

  ReceiverConfig cfg_;
  std::mutex mu_;
  std::map<wire::ShortUrl, CacheEntry> cache_;
  std::map<FixedBytes<layout::kDigest>, EpochSeconds> seen_;  // payload hash -> first seen
};

struct PresenceEntry {
  std::string key;  // device id hex, or source MAC when the device is unknown
  PresenceReport latest;
  EpochSeconds first_seen = 0;
  EpochSeconds last_seen = 0;
  std::size_t count = 0;
};

/// Collapses repeated reports of one device with an unchanged verdict seen
/// within `window` seconds of each other. A verdict change opens a new entry.
class PresenceTable {
 public:
  explicit PresenceTable(std::uint32_t window) : window_(window) {}
  /// True when the report opened a new entry.
  bool add(const PresenceReport& report);
  [[nodiscard]] std::vector<PresenceEntry> entries() const;

 private:
  std::uint32_t window_;
  mutable std::mutex mu_;
  std::vector<PresenceEntry> entries_;
  std::map<std::string, std::size_t> latest_;  // key -> index of its newest entry
};

std::vector<PresenceEntry> dedupe(const std::vector<PresenceReport>& reports, std::uint32_t window);

/// One compact JSON object, no trailing newline.
std::string to_json_line(const PresenceReport& r);
std::string render_table(const std::vector<PresenceEntry>& entries);

}  // namespace paisa::receiver
