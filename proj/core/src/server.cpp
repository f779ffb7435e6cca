#include "paisa/server.hpp"

#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

namespace paisa::server {

namespace fs = std::filesystem;

std::string_view to_string(Rejection r) {
  switch (r) {
    case Rejection::unknown_device: return "unknown_device";
    case Rejection::timestamp_mismatch: return "timestamp_mismatch";
    case Rejection::bad_signature: return "bad_signature";
    case Rejection::unknown_session: return "unknown_session";
    case Rejection::wrong_device: return "wrong_device";
  }
  return "unknown";
}

ManufacturerServer::ManufacturerServer(crypto::KeyPair keys, ServerOptions options,
                                       std::unique_ptr<crypto::RandomSource> rng)
    : keys_(std::move(keys)),
      options_(std::move(options)),
      rng_(rng ? std::move(rng) : std::make_unique<crypto::SystemRandom>()) {
  if (crypto::derive_public_key(keys_.private_key) != keys_.public_key) {
    throw Error("manufacturer key pair is inconsistent");
  }
  if (options_.store_dir) fs::create_directories(*options_.store_dir / "manifests");
}

std::string ManufacturerServer::manifest_path_for(const wire::DeviceId& id) {
  return "/manifests/" + to_hex(id) + ".json";
}

std::string ManufacturerServer::full_url_for(std::string_view path) const {
  return options_.base_url + std::string(path);
}

wire::Nonce ManufacturerServer::fresh_server_nonce() {
  // A per-server counter prefix makes n_svr1 unique by construction.
  wire::Nonce n = rng_->bytes<layout::kNonce>();
  const std::uint64_t c = nonce_counter_++;
  for (int i = 0; i < 8; ++i) n[i] = static_cast<std::uint8_t>(c >> (56 - 8 * i));
  return n;
}

Registration ManufacturerServer::register_device(device::Device& dev, const RegistrationInputs& in) {
  std::lock_guard lock(mu_);
  if (records_.contains(in.device_id)) {
    throw Error("device " + to_hex(in.device_id) + " is already registered");
  }
  const std::string path = manifest_path_for(in.device_id);
  const std::string full_url = full_url_for(path);
  const wire::ShortUrl short_url = registry_.shorten(full_url);

  device::ProvisionInputs p;
  p.device_id = in.device_id;
  p.sw_dev = in.sw_dev;
  p.mfr_public_key = keys_.public_key;
  p.short_url = short_url;
  p.full_url = full_url;
  p.ts_cur = in.ts_cur;
  p.timers = in.timers;
  p.key_seed = in.device_key_seed;
  const crypto::PublicKey device_pk = dev.provision(p);

  manifest::Manifest m;
  m.device_id = in.device_id;
  m.device_type_model = in.description.device_type_model;
  m.manufacturer = in.description.manufacturer;
  m.manufacture_date_location = in.description.manufacture_date_location;
  m.sensors = in.description.sensors;
  m.actuators = in.description.actuators;
  m.deployment_purpose = in.description.deployment_purpose;
  m.network_interfaces = in.description.network_interfaces;
  m.owner_id = in.description.owner_id;
  m.deployment_location = in.description.deployment_location;
  m.sw_hash = dev.expected_sw_hash();
  m.device_public_key = device_pk;
  m.full_url = full_url;
  m.status = in.status;
  m = manifest::sign_manifest(std::move(m), keys_);

  DeviceRecord rec{in.device_id, device_pk, in.ts_cur, path};
  records_[in.device_id] = rec;
  manifests_[in.device_id] = m;
  documents_[path] = manifest::to_json(m);
  persist_manifest(path, documents_[path]);
  persist_records();
  return Registration{m, rec, short_url};
}

void ManufacturerServer::expire_sessions(EpochSeconds now) {
  std::erase_if(sessions_, [&](const auto& kv) {
    return now > kv.second.created_at && now - kv.second.created_at > options_.session_ttl;
  });
}

std::variant<sync::SyncResp, Rejection> ManufacturerServer::handle_sync_req(const sync::SyncReq& req,
                                                                           EpochSeconds now) {
  std::lock_guard lock(mu_);
  expire_sessions(now);
  const auto it = records_.find(req.device_id);
  if (it == records_.end()) return Rejection::unknown_device;
  const DeviceRecord& rec = it->second;
  if (req.ts_prev != rec.latest_ts) return Rejection::timestamp_mismatch;
  if (!crypto::verify(rec.device_public_key, sync::digest(req), req.signature)) {
    return Rejection::bad_signature;
  }
  sync::SyncResp resp;
  resp.device_id = req.device_id;
  resp.n_dev1 = req.n_dev1;
  resp.n_svr1 = fresh_server_nonce();
  resp.ts_cur = std::max(now, rec.latest_ts);  // the map never moves backwards
  resp.signature = crypto::sign(keys_.private_key, sync::digest(resp));
  sessions_[resp.n_svr1] = Session{req.device_id, resp.ts_cur, now};
  return resp;
}

std::variant<Committed, Rejection> ManufacturerServer::handle_sync_ack(const sync::SyncAck& ack,
                                                                       EpochSeconds now) {
  std::lock_guard lock(mu_);
  expire_sessions(now);
  const auto sit = sessions_.find(ack.n_svr1);
  if (sit == sessions_.end()) return Rejection::unknown_session;
  if (sit->second.device_id != ack.device_id) return Rejection::wrong_device;
  const auto rit = records_.find(ack.device_id);
  if (rit == records_.end()) return Rejection::unknown_device;
  if (!crypto::verify(rit->second.device_public_key, sync::digest(ack), ack.signature)) {
    return Rejection::bad_signature;
  }
  if (ack.ts_prev != sit->second.ts_cur) return Rejection::timestamp_mismatch;

  rit->second.latest_ts = ack.ts_prev;
  // First commit wins: every other open session of this device is void.
  std::erase_if(sessions_, [&](const auto& kv) { return kv.second.device_id == ack.device_id; });
  persist_records();
  return Committed{ack.device_id, ack.ts_prev};
}

std::optional<Bytes> ManufacturerServer::handle_datagram(ByteView datagram, EpochSeconds now) {
  const auto msg = sync::decode(datagram);
  if (!msg) return std::nullopt;
  if (const auto* req = std::get_if<sync::SyncReq>(&*msg)) {
    auto result = handle_sync_req(*req, now);
    if (const auto* resp = std::get_if<sync::SyncResp>(&result)) return sync::encode(*resp);
  } else if (const auto* ack = std::get_if<sync::SyncAck>(&*msg)) {
    handle_sync_ack(*ack, now);
  }
  return std::nullopt;
}

std::optional<std::string> ManufacturerServer::serve_manifest(std::string_view path) const {
  std::lock_guard lock(mu_);
  if (auto it = documents_.find(path); it != documents_.end()) return it->second;
  return std::nullopt;
}

std::optional<std::string> ManufacturerServer::resolve(const wire::ShortUrl& key) const {
  return registry_.resolve(key);
}

manifest::ShortUrlRegistry ManufacturerServer::registry() const { return registry_; }

void ManufacturerServer::set_status(const wire::DeviceId& id, manifest::Status status) {
  std::lock_guard lock(mu_);
  auto it = manifests_.find(id);
  if (it == manifests_.end()) throw Error("unknown device " + to_hex(id));
  it->second.status = status;
  it->second = manifest::sign_manifest(std::move(it->second), keys_);
  const std::string& path = records_.at(id).manifest_path;
  documents_[path] = manifest::to_json(it->second);
  persist_manifest(path, documents_[path]);
}

std::optional<DeviceRecord> ManufacturerServer::record(const wire::DeviceId& id) const {
  std::lock_guard lock(mu_);
  if (auto it = records_.find(id); it != records_.end()) return it->second;
  return std::nullopt;
}

std::size_t ManufacturerServer::pending_sessions() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

namespace {

void write_atomically(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

// Callers hold mu_.
void ManufacturerServer::persist_records() const {
  if (!options_.store_dir) return;
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& [id, rec] : records_) {
    j.push_back({{"device_id", to_hex(rec.device_id)},
                 {"device_public_key", to_hex(rec.device_public_key.bytes)},
                 {"latest_ts", rec.latest_ts},
                 {"manifest_path", rec.manifest_path}});
  }
  write_atomically(*options_.store_dir / "records.json", j.dump(2) + "\n");
  registry_.save(*options_.store_dir / "registry.json");
}

void ManufacturerServer::persist_manifest(const std::string& path, const std::string& doc) const {
  if (!options_.store_dir) return;
  write_atomically(*options_.store_dir / fs::path(path).relative_path(), doc);
}

std::unique_ptr<ManufacturerServer> ManufacturerServer::open(crypto::KeyPair keys, const fs::path& store_dir,
                                            std::string base_url,
                                            std::unique_ptr<crypto::RandomSource> rng) {
  auto owned = std::make_unique<ManufacturerServer>(
      std::move(keys), ServerOptions{60, std::move(base_url), store_dir}, std::move(rng));
  ManufacturerServer& srv = *owned;
  const fs::path records_file = store_dir / "records.json";
  if (!fs::exists(records_file)) return owned;
  try {
    const auto j = nlohmann::json::parse(read_file(records_file));
    for (const auto& r : j) {
      DeviceRecord rec;
      rec.device_id = fixed_from_hex<layout::kDeviceId>(r.at("device_id").get<std::string>());
      rec.device_public_key.bytes =
          fixed_from_hex<layout::kPublicKey>(r.at("device_public_key").get<std::string>());
      rec.latest_ts = r.at("latest_ts").get<EpochSeconds>();
      rec.manifest_path = r.at("manifest_path").get<std::string>();
      const std::string doc = read_file(store_dir / fs::path(rec.manifest_path).relative_path());
      auto parsed = manifest::from_json(doc);
      if (auto* err = std::get_if<std::string>(&parsed)) throw Error(rec.manifest_path + ": " + *err);
      srv.manifests_[rec.device_id] = std::get<manifest::Manifest>(parsed);
      srv.documents_[rec.manifest_path] = doc;
      srv.records_[rec.device_id] = rec;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(records_file.string() + ": " + e.what());
  }
  if (fs::exists(store_dir / "registry.json")) {
    srv.registry_ = manifest::ShortUrlRegistry::load(store_dir / "registry.json");
  }
  return owned;
}

}  // namespace paisa::server
