#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "paisa/crypto.hpp"
#include "paisa/wire.hpp"

namespace paisa::manifest {

enum class Status : std::uint8_t { active = 0, revoked = 1 };
std::string_view to_string(Status s);

/// Manufacturer-signed description of one device.
struct Manifest {
  wire::DeviceId device_id{};
  std::string device_type_model;
  std::string manufacturer;
  std::string manufacture_date_location;
  std::vector<std::string> sensors;
  std::vector<std::string> actuators;
  std::string deployment_purpose;
  std::vector<std::string> network_interfaces;
  std::string owner_id;
  std::string deployment_location;
  crypto::Digest sw_hash;
  crypto::PublicKey device_public_key;
  std::string full_url;
  Status status = Status::active;
  // Appended by the manufacturer; not part of the signed payload.
  crypto::PublicKey manufacturer_public_key;
  crypto::Signature manifest_signature;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Deterministic binary form of every field except the manufacturer key and
/// signature. Strings and lists carry 4-byte big-endian length prefixes.
Bytes canonicalize(const Manifest& m);

Manifest sign_manifest(Manifest m, const crypto::KeyPair& mfr_keys);

struct Verification {
  bool valid = false;
  std::string reason;  // empty when valid
  Status status = Status::active;
};

/// Signature check over the canonical payload, optionally pinned to one key.
Verification verify_manifest(const Manifest& m,
                             const std::optional<crypto::PublicKey>& expected_mfr_pk = std::nullopt);

/// JSON document with hex-encoded binary fields, in declared field order.
std::string to_json(const Manifest& m);

/// Parse failures (bad JSON, missing fields, malformed hex) come back as a reason string.
std::variant<Manifest, std::string> from_json(std::string_view document);

/// Parses and verifies a served document in one step.
Verification verify_document(std::string_view document,
                             const std::optional<crypto::PublicKey>& expected_mfr_pk = std::nullopt);

/// Maps 11-byte short keys to full manifest URLs. Reads may run concurrently;
/// writes take an exclusive lock.
class ShortUrlRegistry {
 public:
  static constexpr std::string_view kPrefix = "pai.sa/";

  ShortUrlRegistry() = default;
  ShortUrlRegistry(const ShortUrlRegistry& other);
  ShortUrlRegistry& operator=(const ShortUrlRegistry& other);

  /// Idempotent: the same URL always yields the same key.
  wire::ShortUrl shorten(const std::string& full_url);
  /// Registers a specific key. Throws Error if the key maps to a different URL.
  void put(const wire::ShortUrl& key, const std::string& full_url);

  [[nodiscard]] std::optional<std::string> resolve(const wire::ShortUrl& key) const;
  /// Throws Error if `key` is not 11 bytes long.
  [[nodiscard]] std::optional<std::string> resolve(std::string_view key) const;

  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::map<std::string, std::string> entries() const;

  void save(const std::filesystem::path& path) const;
  static ShortUrlRegistry load(const std::filesystem::path& path);

 private:
  mutable std::shared_mutex mu_;
  std::map<wire::ShortUrl, std::string> by_key_;
  std::map<std::string, wire::ShortUrl> by_url_;
};

}  // namespace paisa::manifest
