#include "paisa/manifest.hpp"

#include <fstream>
#include <iterator>
#include <mutex>

#include <nlohmann/json.hpp>

namespace paisa::manifest {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Status s) { return s == Status::revoked ? "revoked" : "active"; }

namespace {

void put_string(ByteWriter& w, const std::string& s) {
  w.u32be(static_cast<std::uint32_t>(s.size())).raw(as_bytes(s));
}

void put_list(ByteWriter& w, const std::vector<std::string>& items) {
  w.u32be(static_cast<std::uint32_t>(items.size()));
  for (const auto& s : items) put_string(w, s);
}

}  // namespace

Bytes canonicalize(const Manifest& m) {
  ByteWriter w;
  w.raw(m.device_id);
  put_string(w, m.device_type_model);
  put_string(w, m.manufacturer);
  put_string(w, m.manufacture_date_location);
  put_list(w, m.sensors);
  put_list(w, m.actuators);
  put_string(w, m.deployment_purpose);
  put_list(w, m.network_interfaces);
  put_string(w, m.owner_id);
  put_string(w, m.deployment_location);
  w.raw(m.sw_hash.bytes);
  w.raw(m.device_public_key.bytes);
  put_string(w, m.full_url);
  w.u8(static_cast<std::uint8_t>(m.status));
  return std::move(w).take();
}

Manifest sign_manifest(Manifest m, const crypto::KeyPair& mfr_keys) {
  if (crypto::derive_public_key(mfr_keys.private_key) != mfr_keys.public_key) {
    throw Error("manufacturer key pair is inconsistent");
  }
  m.manufacturer_public_key = mfr_keys.public_key;
  m.manifest_signature = crypto::sign(mfr_keys.private_key, crypto::sha256(canonicalize(m)));
  return m;
}

Verification verify_manifest(const Manifest& m,
                             const std::optional<crypto::PublicKey>& expected_mfr_pk) {
  Verification v;
  v.status = m.status;
  if (expected_mfr_pk && *expected_mfr_pk != m.manufacturer_public_key) {
    v.reason = "manufacturer key is not the pinned key";
    return v;
  }
  if (!crypto::verify(m.manufacturer_public_key, crypto::sha256(canonicalize(m)),
                      m.manifest_signature)) {
    v.reason = "manifest signature does not verify";
    return v;
  }
  v.valid = true;
  return v;
}

std::string to_json(const Manifest& m) {
  ordered_json j;
  j["device_id"] = to_hex(m.device_id);
  j["device_type_model"] = m.device_type_model;
  j["manufacturer"] = m.manufacturer;
  j["manufacture_date_location"] = m.manufacture_date_location;
  j["sensors"] = m.sensors;
  j["actuators"] = m.actuators;
  j["deployment_purpose"] = m.deployment_purpose;
  j["network_interfaces"] = m.network_interfaces;
  j["owner_id"] = m.owner_id;
  j["deployment_location"] = m.deployment_location;
  j["sw_hash"] = to_hex(m.sw_hash.bytes);
  j["device_public_key"] = to_hex(m.device_public_key.bytes);
  j["full_url"] = m.full_url;
  j["status"] = std::string(to_string(m.status));
  j["manufacturer_public_key"] = to_hex(m.manufacturer_public_key.bytes);
  j["manifest_signature"] = to_hex(m.manifest_signature.bytes);
  return j.dump(2) + "\n";
}

std::variant<Manifest, std::string> from_json(std::string_view document) {
  try {
    const auto j = ordered_json::parse(document);
    Manifest m;
    m.device_id = fixed_from_hex<layout::kDeviceId>(j.at("device_id").get<std::string>());
    m.device_type_model = j.at("device_type_model").get<std::string>();
    m.manufacturer = j.at("manufacturer").get<std::string>();
    m.manufacture_date_location = j.at("manufacture_date_location").get<std::string>();
    m.sensors = j.at("sensors").get<std::vector<std::string>>();
    m.actuators = j.at("actuators").get<std::vector<std::string>>();
    m.deployment_purpose = j.at("deployment_purpose").get<std::string>();
    m.network_interfaces = j.at("network_interfaces").get<std::vector<std::string>>();
    m.owner_id = j.at("owner_id").get<std::string>();
    m.deployment_location = j.at("deployment_location").get<std::string>();
    m.sw_hash.bytes = fixed_from_hex<layout::kDigest>(j.at("sw_hash").get<std::string>());
    m.device_public_key.bytes =
        fixed_from_hex<layout::kPublicKey>(j.at("device_public_key").get<std::string>());
    m.full_url = j.at("full_url").get<std::string>();
    const auto status = j.at("status").get<std::string>();
    if (status == "active") {
      m.status = Status::active;
    } else if (status == "revoked") {
      m.status = Status::revoked;
    } else {
      return "unknown status '" + status + "'";
    }
    m.manufacturer_public_key.bytes =
        fixed_from_hex<layout::kPublicKey>(j.at("manufacturer_public_key").get<std::string>());
    m.manifest_signature.bytes =
        fixed_from_hex<layout::kSignature>(j.at("manifest_signature").get<std::string>());
    return m;
  } catch (const std::exception& e) {
    return std::string("malformed manifest: ") + e.what();
  }
}

Verification verify_document(std::string_view document,
                             const std::optional<crypto::PublicKey>& expected_mfr_pk) {
  auto parsed = from_json(document);
  if (auto* reason = std::get_if<std::string>(&parsed)) return Verification{false, *reason, {}};
  return verify_manifest(std::get<Manifest>(parsed), expected_mfr_pk);
}

// --- ShortUrlRegistry ---

ShortUrlRegistry::ShortUrlRegistry(const ShortUrlRegistry& other) {
  std::shared_lock lock(other.mu_);
  by_key_ = other.by_key_;
  by_url_ = other.by_url_;
}

ShortUrlRegistry& ShortUrlRegistry::operator=(const ShortUrlRegistry& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  by_key_ = other.by_key_;
  by_url_ = other.by_url_;
  return *this;
}

wire::ShortUrl ShortUrlRegistry::shorten(const std::string& full_url) {
  static constexpr std::string_view kAlphabet =
      "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
  constexpr std::size_t kCodeLen = layout::kShortUrl - kPrefix.size();
  constexpr std::uint32_t kMaxProbes = 1u << 16;

  std::unique_lock lock(mu_);
  if (auto it = by_url_.find(full_url); it != by_url_.end()) return it->second;
  for (std::uint32_t probe = 0; probe < kMaxProbes; ++probe) {
    ByteWriter w;
    w.raw(as_bytes(full_url)).u32be(probe);
    const crypto::Digest d = crypto::sha256(w.bytes());
    std::string key(kPrefix);
    for (std::size_t i = 0; i < kCodeLen; ++i) key.push_back(kAlphabet[d.bytes[i] % kAlphabet.size()]);
    wire::ShortUrl candidate(key);
    if (!by_key_.contains(candidate)) {
      by_key_.emplace(candidate, full_url);
      by_url_.emplace(full_url, candidate);
      return candidate;
    }
  }
  throw Error("short URL space exhausted");
}

void ShortUrlRegistry::put(const wire::ShortUrl& key, const std::string& full_url) {
  std::unique_lock lock(mu_);
  if (auto it = by_key_.find(key); it != by_key_.end()) {
    if (it->second != full_url) throw Error("short key " + key.str() + " already maps elsewhere");
    return;
  }
  by_key_.emplace(key, full_url);
  by_url_.emplace(full_url, key);
}

std::optional<std::string> ShortUrlRegistry::resolve(const wire::ShortUrl& key) const {
  std::shared_lock lock(mu_);
  if (auto it = by_key_.find(key); it != by_key_.end()) return it->second;
  return std::nullopt;
}

std::optional<std::string> ShortUrlRegistry::resolve(std::string_view key) const {
  if (key.size() != layout::kShortUrl) {
    throw Error("short key must be " + std::to_string(layout::kShortUrl) + " bytes");
  }
  return resolve(wire::ShortUrl(key));
}

std::size_t ShortUrlRegistry::size() const {
  std::shared_lock lock(mu_);
  return by_key_.size();
}

std::map<std::string, std::string> ShortUrlRegistry::entries() const {
  std::shared_lock lock(mu_);
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : by_key_) out.emplace(k.str(), v);
  return out;
}

void ShortUrlRegistry::save(const std::filesystem::path& path) const {
  ordered_json j = ordered_json::object();
  for (const auto& [k, v] : entries()) j[k] = v;
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write registry " + path.string());
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

ShortUrlRegistry ShortUrlRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open registry " + path.string());
  ShortUrlRegistry reg;
  try {
    const auto j = ordered_json::parse(in);
    for (const auto& [k, v] : j.items()) reg.put(wire::ShortUrl(k), v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return reg;
}

}  // namespace paisa::manifest
