#include "paisa/simnet.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace paisa::simnet {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
using receiver::Verdict;

std::string_view to_string(Link l) {
  switch (l) {
    case Link::beacon: return "beacon";
    case Link::sync_up: return "sync_up";
    case Link::sync_down: return "sync_down";
  }
  return "unknown";
}

namespace {

std::string_view tag_name(sync::Tag t) {
  switch (t) {
    case sync::Tag::req: return "sync_req";
    case sync::Tag::resp: return "sync_resp";
    case sync::Tag::ack: return "sync_ack";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Scenario parsing

class Parser {
 public:
  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw Error("scenario " + (where.empty() ? std::string("/") : where) + ": " + what);
  }

  template <typename T>
  static T get(const json& j, const std::string& where, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
      return j.at(key).get<T>();
    } catch (const json::exception&) {
      fail(where + "/" + key, "wrong type");
    }
  }

  template <typename T>
  static T require(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) fail(where + "/" + key, "missing");
    return get<T>(j, where, key, T{});
  }

  static wire::DeviceId device_id(const json& j, const std::string& where) {
    if (!j.is_string()) fail(where, "device id must be a hex string");
    try {
      return fixed_from_hex<layout::kDeviceId>(j.get<std::string>());
    } catch (const Error& e) {
      fail(where, e.what());
    }
  }

  static std::optional<wire::DeviceId> opt_device(const json& j, const std::string& where) {
    if (!j.contains("device")) return std::nullopt;
    return device_id(j.at("device"), where + "/device");
  }

  static Link link(const json& j, const std::string& where, Link fallback) {
    if (!j.contains("link")) return fallback;
    const auto s = get<std::string>(j, where, "link", "");
    if (s == "beacon") return Link::beacon;
    if (s == "sync_up") return Link::sync_up;
    if (s == "sync_down") return Link::sync_down;
    fail(where + "/link", "unknown link '" + s + "'");
  }

  static std::optional<sync::Tag> kind(const json& j, const std::string& where) {
    if (!j.contains("kind")) return std::nullopt;
    const auto s = get<std::string>(j, where, "kind", "");
    if (s == "req" || s == "sync_req") return sync::Tag::req;
    if (s == "resp" || s == "sync_resp") return sync::Tag::resp;
    if (s == "ack" || s == "sync_ack") return sync::Tag::ack;
    fail(where + "/kind", "unknown message kind '" + s + "'");
  }

  static Delay delay(const json& j, const std::string& where) {
    if (j.is_number_unsigned()) {
      const auto d = j.get<std::uint32_t>();
      return {d, d};
    }
    if (j.is_object()) {
      Delay d{get<std::uint32_t>(j, where, "min", 0), get<std::uint32_t>(j, where, "max", 0)};
      if (d.max < d.min) fail(where, "max is below min");
      return d;
    }
    fail(where, "delay must be a non-negative integer or {min, max}");
  }

  static std::vector<std::string> strings(const json& j, const std::string& where, const char* key) {
    return get<std::vector<std::string>>(j, where, key, {});
  }
};

const std::set<std::string, std::less<>> kTrustedTargets = {
    "trusted_state", "private_key",  "device_key", "device_private_key", "ts_prev", "sw_hash_expected",
    "expected_hash", "mfr_public_key", "short_url", "timers",         "secure_timer", "clock"};

}  // namespace

Scenario parse_scenario(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("scenario: ") + e.what());
  }
  using P = Parser;
  if (!root.is_object()) P::fail("", "top level must be an object");

  Scenario sc;
  sc.name = P::get<std::string>(root, "", "name", "");
  sc.seed = P::get<std::uint64_t>(root, "", "seed", sc.seed);
  sc.epoch = P::get<EpochSeconds>(root, "", "epoch", sc.epoch);
  sc.horizon = P::get<std::uint32_t>(root, "", "horizon", sc.horizon);
  if (root.contains("receiver")) {
    const auto& r = root.at("receiver");
    sc.epsilon = P::get<std::uint32_t>(r, "/receiver", "epsilon", sc.epsilon);
    sc.future_skew = P::get<std::uint32_t>(r, "/receiver", "future_skew", sc.future_skew);
    sc.dedupe_window = P::get<std::uint32_t>(r, "/receiver", "dedupe_window", sc.dedupe_window);
  }
  if (root.contains("boot")) {
    const auto& b = root.at("boot");
    sc.boot.max_attempts = P::get<unsigned>(b, "/boot", "max_attempts", sc.boot.max_attempts);
    sc.boot.initial_backoff = P::get<std::uint64_t>(b, "/boot", "initial_backoff", sc.boot.initial_backoff);
    if (sc.boot.max_attempts == 0 || sc.boot.initial_backoff == 0) P::fail("/boot", "values must be positive");
  }

  if (!root.contains("devices") || !root.at("devices").is_array() || root.at("devices").empty()) {
    P::fail("/devices", "at least one device is required");
  }
  std::set<wire::DeviceId> ids;
  for (std::size_t i = 0; i < root.at("devices").size(); ++i) {
    const auto& d = root.at("devices")[i];
    const std::string where = "/devices/" + std::to_string(i);
    if (!d.is_object() || !d.contains("id")) P::fail(where + "/id", "missing");
    DeviceSpec spec;
    spec.id = P::device_id(d.at("id"), where + "/id");
    if (!ids.insert(spec.id).second) P::fail(where + "/id", "duplicate device id");
    spec.name = P::get<std::string>(d, where, "name", "dev" + std::to_string(i));
    spec.timers.t_announce = P::get<std::uint32_t>(d, where, "t_announce", spec.timers.t_announce);
    spec.timers.t_attest = P::get<std::uint32_t>(d, where, "t_attest", spec.timers.t_attest);
    try {
      spec.timers.validate();
    } catch (const Error& e) {
      P::fail(where, e.what());
    }
    spec.boot_at = P::get<std::uint32_t>(d, where, "boot_at", 0);
    spec.image_size = P::get<std::size_t>(d, where, "image_size", spec.image_size);
    if (spec.image_size == 0) P::fail(where + "/image_size", "must be positive");
    spec.app_packets_per_second = P::get<std::uint32_t>(d, where, "app_packets_per_second", 0);
    const std::string status = P::get<std::string>(d, where, "status", "active");
    if (status == "revoked") {
      spec.status = manifest::Status::revoked;
    } else if (status != "active") {
      P::fail(where + "/status", "expected active or revoked");
    }
    const json desc = d.value("description", json::object());
    const std::string dw = where + "/description";
    spec.description.device_type_model = P::get<std::string>(desc, dw, "device_type_model", "Sensor");
    spec.description.manufacturer = P::get<std::string>(desc, dw, "manufacturer", "Example Devices");
    spec.description.manufacture_date_location =
        P::get<std::string>(desc, dw, "manufacture_date_location", "");
    spec.description.sensors = P::strings(desc, dw, "sensors");
    spec.description.actuators = P::strings(desc, dw, "actuators");
    spec.description.deployment_purpose = P::get<std::string>(desc, dw, "deployment_purpose", "");
    spec.description.network_interfaces = P::strings(desc, dw, "network_interfaces");
    spec.description.owner_id = P::get<std::string>(desc, dw, "owner_id", "");
    spec.description.deployment_location = P::get<std::string>(desc, dw, "deployment_location", "");
    sc.devices.push_back(std::move(spec));
  }

  const json adv = root.value("adversary", json::object());
  if (adv.contains("links")) {
    for (const auto& [name, lp] : adv.at("links").items()) {
      const std::string where = "/adversary/links/" + name;
      json probe = {{"link", name}};
      const Link l = P::link(probe, where, Link::beacon);
      LinkPolicy policy;
      policy.drop_probability = P::get<double>(lp, where, "drop_probability", 0.0);
      if (policy.drop_probability < 0.0 || policy.drop_probability > 1.0) {
        P::fail(where + "/drop_probability", "must lie in [0, 1]");
      }
      if (lp.contains("delay")) policy.delay = P::delay(lp.at("delay"), where + "/delay");
      sc.adversary.links[l] = policy;
    }
  }
  const auto each = [&](const char* key, const auto& fn) {
    if (!adv.contains(key)) return;
    if (!adv.at(key).is_array()) P::fail(std::string("/adversary/") + key, "must be an array");
    for (std::size_t i = 0; i < adv.at(key).size(); ++i) {
      fn(adv.at(key)[i], std::string("/adversary/") + key + "/" + std::to_string(i));
    }
  };
  const auto known = [&](const wire::DeviceId& id, const std::string& where) {
    if (!ids.contains(id)) P::fail(where, "unknown device " + to_hex(id));
  };
  each("drop", [&](const json& j, const std::string& w) {
    DropRule r;
    r.link = P::link(j, w, Link::beacon);
    r.device = P::opt_device(j, w);
    if (r.device) known(*r.device, w + "/device");
    r.kind = P::kind(j, w);
    r.count = P::get<std::uint32_t>(j, w, "count", 1);
    sc.adversary.drops.push_back(r);
  });
  each("tamper", [&](const json& j, const std::string& w) {
    TamperRule r;
    r.link = P::link(j, w, Link::beacon);
    r.device = P::opt_device(j, w);
    if (r.device) known(*r.device, w + "/device");
    r.from = P::get<std::uint32_t>(j, w, "from", 0);
    r.until = P::get<std::uint32_t>(j, w, "until", UINT32_MAX);
    r.offset = P::require<std::size_t>(j, w, "offset");
    r.mask = P::get<std::uint8_t>(j, w, "mask", 0x01);
    if (r.mask == 0) P::fail(w + "/mask", "must be nonzero");
    sc.adversary.tampers.push_back(r);
  });
  each("replay", [&](const json& j, const std::string& w) {
    ReplayRule r;
    r.link = P::link(j, w, Link::beacon);
    r.device = P::opt_device(j, w);
    if (r.device) known(*r.device, w + "/device");
    r.kind = P::kind(j, w);
    r.index = P::get<std::uint32_t>(j, w, "index", 0);
    r.delay = P::require<std::uint32_t>(j, w, "delay");
    if (j.contains("tamper_offset")) r.tamper_offset = P::get<std::size_t>(j, w, "tamper_offset", 0);
    r.tamper_mask = P::get<std::uint8_t>(j, w, "tamper_mask", 0x01);
    sc.adversary.replays.push_back(r);
  });
  each("compromise", [&](const json& j, const std::string& w) {
    CompromiseDirective c;
    if (!j.contains("device")) P::fail(w + "/device", "missing");
    c.device = P::device_id(j.at("device"), w + "/device");
    known(c.device, w + "/device");
    c.at = P::require<std::uint32_t>(j, w, "at");
    const auto target = P::require<std::string>(j, w, "target");
    if (kTrustedTargets.contains(target)) {
      P::fail(w + "/target", "'" + target + "' is trusted state; the adversary cannot reach it");
    }
    if (target == "program_memory") {
      c.target = CompromiseTarget::program_memory;
      c.offset = P::get<std::size_t>(j, w, "offset", 0);
    } else if (target == "busy") {
      c.target = CompromiseTarget::busy;
    } else if (target == "restore") {
      c.target = CompromiseTarget::restore;
    } else {
      P::fail(w + "/target", "unknown target '" + target + "'");
    }
    sc.adversary.compromises.push_back(c);
  });
  each("fault", [&](const json& j, const std::string& w) {
    FaultDirective f;
    if (!j.contains("device")) P::fail(w + "/device", "missing");
    f.device = P::device_id(j.at("device"), w + "/device");
    known(f.device, w + "/device");
    f.at = P::require<std::uint32_t>(j, w, "at");
    sc.adversary.faults.push_back(f);
  });
  for (const auto& [key, _] : adv.items()) {
    static const std::set<std::string, std::less<>> kKnown = {"links",   "drop",       "tamper",
                                                             "replay",  "compromise", "fault"};
    if (!kKnown.contains(key)) P::fail("/adversary/" + key, "unknown adversary capability");
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open scenario " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return parse_scenario(text);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Simulation

struct Simulation::Party {
  DeviceSpec spec;
  device::Device dev;
  Bytes image;
  std::uint64_t generation = 0;  // bumped by every boot; stale retry timers compare it
  unsigned attempts = 0;
  std::uint64_t backoff = 1;
};

namespace {

ordered_json event(std::uint32_t t, std::string_view name) {
  ordered_json j;
  j["t"] = t;
  j["event"] = name;
  return j;
}

std::string short_digest(ByteView bytes) {
  const auto d = crypto::sha256(bytes);
  return to_hex(ByteView(d.bytes).first(8));
}

}  // namespace

Simulation::Simulation(Scenario scenario) : sc_(std::move(scenario)), rng_(sc_.seed) {
  const crypto::DeterministicRandom root(sc_.seed);
  auto mfr_seed = root.derive("manufacturer-key").bytes<32>();
  server_ = std::make_unique<server::ManufacturerServer>(
      crypto::generate_keypair(ByteView(mfr_seed)),
      server::ServerOptions{60, "http://manufacturer.example", std::nullopt},
      std::make_unique<crypto::DeterministicRandom>(root.derive("server")));
  fetcher_ = std::make_unique<receiver::ServerFetcher>(*server_);
  receiver::ReceiverConfig rc;
  rc.epsilon = sc_.epsilon;
  rc.future_skew = sc_.future_skew;
  rc.fetcher = fetcher_.get();
  rc.pinned_mfr_keys = {server_->public_key()};
  receiver_ = std::make_unique<receiver::Receiver>(rc);

  for (const auto& spec : sc_.devices) {
    const std::string hex = to_hex(spec.id);
    auto party = std::make_unique<Party>(Party{
        spec, device::Device(std::make_unique<crypto::DeterministicRandom>(root.derive("device-nonce/" + hex))),
        {}, 0, 0, 1});
    party->image.resize(spec.image_size);
    root.derive("image/" + hex).fill(party->image);
    server::RegistrationInputs in;
    in.device_id = spec.id;
    in.sw_dev = party->image;
    in.description = spec.description;
    in.ts_cur = sc_.epoch >= 3600 ? sc_.epoch - 3600 : 0;  // provisioned an hour before the run
    in.timers = spec.timers;
    in.status = spec.status;
    in.device_key_seed = root.derive("device-key/" + hex).bytes<32>();
    server_->register_device(party->dev, in);
    result_.devices[spec.id].name = spec.name;
    parties_.emplace(spec.id, std::move(party));
  }
  drop_used_.assign(sc_.adversary.drops.size(), 0);
  replay_seen_.assign(sc_.adversary.replays.size(), 0);

  for (auto& [id, p] : parties_) {
    Party* raw = p.get();
    at(raw->spec.boot_at, [this, raw] { start_boot(*raw); });
    at(raw->spec.boot_at + 1, [this, raw] { on_tick(*raw); });
  }
  for (const auto& c : sc_.adversary.compromises) compromise_device(c);
  for (const auto& f : sc_.adversary.faults) {
    Party* raw = &party(f.device);
    at(f.at, [this, raw] {
      auto e = event(now_, "fault");
      e["device"] = to_hex(raw->spec.id);
      emit(e.dump());
      start_boot(*raw);
    });
  }
}

Simulation::~Simulation() = default;

const server::ManufacturerServer& Simulation::server() const { return *server_; }

Simulation::Party& Simulation::party(const wire::DeviceId& id) {
  auto it = parties_.find(id);
  if (it == parties_.end()) throw Error("unknown device " + to_hex(id));
  return *it->second;
}

void Simulation::at(std::uint32_t time, std::function<void()> action) {
  queue_.push(Event{time, seq_++, std::move(action)});
}

void Simulation::emit(std::string line) { result_.log.push_back(std::move(line)); }

double Simulation::uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

std::uint32_t Simulation::draw_delay(const Delay& d) {
  if (d.max == d.min) return d.min;
  return d.min + static_cast<std::uint32_t>(rng_() % (static_cast<std::uint64_t>(d.max - d.min) + 1));
}

void Simulation::send(Link link, const wire::DeviceId& device, std::optional<sync::Tag> kind, Bytes bytes) {
  InFlight msg{next_msg_id_++, link, device, kind, std::move(bytes)};
  auto e = event(now_, "send");
  e["id"] = msg.id;
  e["link"] = to_string(link);
  e["device"] = to_hex(device);
  e["kind"] = kind ? tag_name(*kind) : std::string_view("beacon");
  e["bytes"] = msg.bytes.size();
  e["digest"] = short_digest(msg.bytes);
  emit(e.dump());

  const auto matches = [&](Link l, const std::optional<wire::DeviceId>& d, const std::optional<sync::Tag>& k) {
    return l == link && (!d || *d == device) && (!k || k == kind);
  };
  for (std::size_t i = 0; i < sc_.adversary.replays.size(); ++i) {
    const auto& r = sc_.adversary.replays[i];
    if (!matches(r.link, r.device, r.kind) || replay_seen_[i]++ != r.index) continue;
    Bytes copy = msg.bytes;
    if (r.tamper_offset && *r.tamper_offset < copy.size()) copy[*r.tamper_offset] ^= r.tamper_mask;
    const std::uint64_t original = msg.id;
    at(now_ + r.delay, [this, link, device, kind, copy = std::move(copy), original]() mutable {
      inject(link, device, kind, std::move(copy), original);
    });
  }
  for (std::size_t i = 0; i < sc_.adversary.drops.size(); ++i) {
    const auto& r = sc_.adversary.drops[i];
    if (matches(r.link, r.device, r.kind) && drop_used_[i] < r.count) {
      ++drop_used_[i];
      auto d = event(now_, "drop");
      d["id"] = msg.id;
      d["reason"] = "rule";
      emit(d.dump());
      return;
    }
  }
  LinkPolicy policy;
  if (auto it = sc_.adversary.links.find(link); it != sc_.adversary.links.end()) policy = it->second;
  if (policy.drop_probability > 0.0 && uniform() < policy.drop_probability) {
    auto d = event(now_, "drop");
    d["id"] = msg.id;
    d["reason"] = "loss";
    emit(d.dump());
    return;
  }
  for (const auto& r : sc_.adversary.tampers) {
    if (!matches(r.link, r.device, std::nullopt) || now_ < r.from || now_ > r.until) continue;
    if (r.offset >= msg.bytes.size()) continue;
    msg.bytes[r.offset] ^= r.mask;
    auto t = event(now_, "tamper");
    t["id"] = msg.id;
    t["offset"] = r.offset;
    t["mask"] = r.mask;
    emit(t.dump());
  }
  const std::uint32_t delay = draw_delay(policy.delay);
  in_flight_.insert(msg.id);
  at(now_ + delay, [this, msg = std::move(msg)]() mutable { deliver(std::move(msg)); });
}

void Simulation::inject(Link link, const wire::DeviceId& device, std::optional<sync::Tag> kind, Bytes bytes,
                        std::optional<std::uint64_t> replay_of) {
  InFlight msg{next_msg_id_++, link, device, kind, std::move(bytes)};
  auto e = event(now_, "inject");
  e["id"] = msg.id;
  e["link"] = to_string(link);
  e["device"] = to_hex(device);
  e["kind"] = kind ? tag_name(*kind) : std::string_view("beacon");
  e["replay_of"] = replay_of ? ordered_json(*replay_of) : ordered_json();
  e["digest"] = short_digest(msg.bytes);
  emit(e.dump());
  deliver(std::move(msg));
}

void Simulation::inject_replay(Bytes frame, std::uint32_t when) {
  if (when < now_) throw Error("replay time " + std::to_string(when) + " is in the past");
  wire::DeviceId sender{};
  if (auto d = wire::decode_beacon(frame); auto* b = std::get_if<wire::DecodedBeacon>(&d)) {
    for (const auto& [id, p] : parties_) {
      if (device::mac_for(id) == b->source) sender = id;
    }
  }
  at(when, [this, sender, frame = std::move(frame)]() mutable {
    inject(Link::beacon, sender, std::nullopt, std::move(frame), std::nullopt);
  });
}

void Simulation::compromise_device(const CompromiseDirective& c) {
  Party* p = &party(c.device);
  at(c.at, [this, p, c] {
    device::NormalSoftware& sw = p->dev.normal_software();
    auto e = event(now_, "compromise");
    e["device"] = to_hex(c.device);
    switch (c.target) {
      case CompromiseTarget::program_memory:
        sw.program_memory[c.offset % sw.program_memory.size()] ^= 0xff;
        sw.compromised = true;
        e["target"] = "program_memory";
        e["offset"] = c.offset % sw.program_memory.size();
        break;
      case CompromiseTarget::busy:
        sw.busy = true;
        e["target"] = "busy";
        break;
      case CompromiseTarget::restore:
        sw.program_memory = p->image;
        sw.busy = false;
        sw.compromised = false;
        e["target"] = "restore";
        break;
    }
    emit(e.dump());
  });
}

void Simulation::deliver(InFlight msg) {
  in_flight_.erase(msg.id);
  auto e = event(now_, "deliver");
  e["id"] = msg.id;
  emit(e.dump());
  switch (msg.link) {
    case Link::beacon: on_beacon(msg); break;
    case Link::sync_up: on_server_datagram(msg); break;
    case Link::sync_down:
      if (auto it = parties_.find(msg.device); it != parties_.end()) on_device_datagram(*it->second, msg);
      break;
  }
}

void Simulation::start_boot(Party& p) {
  ++p.generation;
  p.dev.reset();
  result_.devices[p.spec.id].synced = false;
  p.attempts = 0;
  p.backoff = sc_.boot.initial_backoff;
  attempt_sync(p, p.generation);
}

void Simulation::attempt_sync(Party& p, std::uint64_t generation) {
  if (generation != p.generation || p.dev.synced()) return;
  auto& stats = result_.devices[p.spec.id];
  if (p.attempts == sc_.boot.max_attempts) {
    auto e = event(now_, "boot_failed");
    e["device"] = to_hex(p.spec.id);
    e["attempts"] = p.attempts;
    emit(e.dump());
    return;
  }
  ++p.attempts;
  stats.boot_attempts = p.attempts;
  auto e = event(now_, "sync_attempt");
  e["device"] = to_hex(p.spec.id);
  e["attempt"] = p.attempts;
  emit(e.dump());
  send(Link::sync_up, p.spec.id, sync::Tag::req, sync::encode(p.dev.make_sync_req()));
  const std::uint32_t retry_at = now_ + static_cast<std::uint32_t>(p.backoff);
  p.backoff *= 2;
  at(retry_at, [this, &p, generation] { attempt_sync(p, generation); });
}

void Simulation::on_server_datagram(const InFlight& msg) {
  const auto decoded = sync::decode(msg.bytes);
  auto e = event(now_, "server");
  e["id"] = msg.id;
  if (!decoded) {
    e["step"] = "malformed";
    emit(e.dump());
    return;
  }
  const EpochSeconds server_now = sc_.epoch + now_;
  if (const auto* req = std::get_if<sync::SyncReq>(&*decoded)) {
    e["step"] = "sync_req";
    e["device"] = to_hex(req->device_id);
    auto result = server_->handle_sync_req(*req, server_now);
    if (const auto* resp = std::get_if<sync::SyncResp>(&result)) {
      e["result"] = "accepted";
      e["ts_cur"] = resp->ts_cur;
      if (auto rec = server_->record(req->device_id)) e["latest_ts"] = rec->latest_ts;
      emit(e.dump());
      send(Link::sync_down, req->device_id, sync::Tag::resp, sync::encode(*resp));
      return;
    }
    e["result"] = server::to_string(std::get<server::Rejection>(result));
    if (auto rec = server_->record(req->device_id)) e["latest_ts"] = rec->latest_ts;
  } else if (const auto* ack = std::get_if<sync::SyncAck>(&*decoded)) {
    e["step"] = "sync_ack";
    e["device"] = to_hex(ack->device_id);
    auto result = server_->handle_sync_ack(*ack, server_now);
    e["result"] = std::holds_alternative<server::Committed>(result)
                      ? std::string_view("committed")
                      : server::to_string(std::get<server::Rejection>(result));
    if (auto rec = server_->record(ack->device_id)) e["latest_ts"] = rec->latest_ts;
  } else {
    e["step"] = "unexpected_sync_resp";
  }
  emit(e.dump());
}

void Simulation::on_device_datagram(Party& p, const InFlight& msg) {
  const auto decoded = sync::decode(msg.bytes);
  const auto* resp = decoded ? std::get_if<sync::SyncResp>(&*decoded) : nullptr;
  auto e = event(now_, "device_sync");
  e["id"] = msg.id;
  e["device"] = to_hex(p.spec.id);
  if (resp == nullptr) {
    e["result"] = "malformed";
    emit(e.dump());
    return;
  }
  if (p.dev.synced()) {
    e["result"] = "already_synced";
    emit(e.dump());
    return;
  }
  auto result = p.dev.handle_sync_resp(*resp, now_);
  if (const auto* fail = std::get_if<device::SyncFailure>(&result)) {
    e["result"] = device::to_string(*fail);
    emit(e.dump());
    return;
  }
  e["result"] = "synced";
  e["ts"] = resp->ts_cur;
  e["attempt"] = p.attempts;
  emit(e.dump());
  result_.devices[p.spec.id].synced = true;
  send(Link::sync_up, p.spec.id, sync::Tag::ack, sync::encode(std::get<sync::SyncAck>(result)));
  for (auto& frame : p.dev.finish_boot(now_)) {
    ++result_.devices[p.spec.id].beacons_sent;
    send(Link::beacon, p.spec.id, std::nullopt, std::move(frame));
  }
}

void Simulation::on_tick(Party& p) {
  device::NormalSoftware& sw = p.dev.normal_software();
  // A busy application floods the radio queue; the stub still sends the announcement first.
  const std::uint32_t app = sw.busy ? 8 : p.spec.app_packets_per_second;
  for (std::uint32_t i = 0; i < app && p.dev.synced(); ++i) sw.outbox.push_back(Bytes(64, 0xaa));

  auto frames = p.dev.tick(now_);
  const std::size_t beacons = p.dev.last_announcement_count();
  auto& stats = result_.devices[p.spec.id];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i < beacons) {
      ++stats.beacons_sent;
      send(Link::beacon, p.spec.id, std::nullopt, std::move(frames[i]));
    } else {
      ++stats.app_packets_sent;
    }
  }
  if (now_ + 1 <= sc_.horizon) at(now_ + 1, [this, &p] { on_tick(p); });
}

void Simulation::on_beacon(const InFlight& msg) {
  result_.frames.push_back(pcap::Record{sc_.epoch + now_, 0, msg.bytes});
  auto scan = receiver_->process(msg.bytes, sc_.epoch + now_);
  if (auto* r = std::get_if<receiver::PresenceReport>(&scan)) {
    auto e = event(now_, "verdict");
    e["id"] = msg.id;
    e["device"] = to_hex(msg.device);
    e["verdict"] = receiver::to_string(r->verdict);
    e["announcement_ts"] = r->announcement_ts;
    e["att_result"] = r->att_result ? 1 : 0;
    e["att_timestamp"] = r->att_timestamp;
    emit(e.dump());
    ++result_.verdicts[r->verdict];
    ++result_.devices[msg.device].verdicts[r->verdict];
    result_.reports.push_back(*r);
  } else if (auto* d = std::get_if<receiver::Duplicate>(&scan)) {
    auto e = event(now_, "duplicate");
    e["id"] = msg.id;
    e["device"] = to_hex(msg.device);
    e["first_seen"] = d->first_seen;
    emit(e.dump());
    ++result_.duplicates;
  } else {
    auto e = event(now_, "not_paisa");
    e["id"] = msg.id;
    e["reason"] = wire::to_string(std::get<wire::NotPaisa>(scan));
    emit(e.dump());
  }
}

SimResult Simulation::run() {
  if (ran_) throw Error("simulation already ran");
  ran_ = true;
  while (!queue_.empty() && queue_.top().time <= sc_.horizon) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.time;
    ev.action();
  }
  for (std::uint64_t id : in_flight_) {
    auto e = event(sc_.horizon, "undelivered");
    e["id"] = id;
    emit(e.dump());
  }
  for (const auto& [id, p] : parties_) {
    if (auto rec = server_->record(id)) result_.server_latest_ts[id] = rec->latest_ts;
  }
  result_.presence = receiver::dedupe(result_.reports, sc_.dedupe_window);
  return std::move(result_);
}

std::string SimResult::log_text() const {
  std::string out;
  for (const auto& line : log) {
    out += line;
    out += '\n';
  }
  return out;
}

namespace {

constexpr Verdict kAllVerdicts[] = {Verdict::verified,
                                    Verdict::stale,
                                    Verdict::future,
                                    Verdict::bad_manifest_signature,
                                    Verdict::bad_announcement_signature,
                                    Verdict::revoked,
                                    Verdict::redirect_mismatch,
                                    Verdict::compromised,
                                    Verdict::fetch_failed};

std::size_t count_of(const std::map<Verdict, std::size_t>& m, Verdict v) {
  auto it = m.find(v);
  return it == m.end() ? 0 : it->second;
}

}  // namespace

std::string SimResult::summary_json() const {
  ordered_json j;
  ordered_json totals;
  for (Verdict v : kAllVerdicts) totals[std::string(receiver::to_string(v))] = count_of(verdicts, v);
  j["verdicts"] = totals;
  j["duplicates"] = duplicates;
  j["devices"] = ordered_json::array();
  for (const auto& [id, s] : devices) {
    ordered_json d;
    d["id"] = to_hex(id);
    d["name"] = s.name;
    d["synced"] = s.synced;
    d["boot_attempts"] = s.boot_attempts;
    d["beacons_sent"] = s.beacons_sent;
    d["app_packets_sent"] = s.app_packets_sent;
    ordered_json per;
    for (Verdict v : kAllVerdicts) {
      if (auto n = count_of(s.verdicts, v)) per[std::string(receiver::to_string(v))] = n;
    }
    d["verdicts"] = per.is_null() ? ordered_json::object() : per;
    if (auto it = server_latest_ts.find(id); it != server_latest_ts.end()) d["server_latest_ts"] = it->second;
    j["devices"].push_back(d);
  }
  return j.dump(2) + "\n";
}

std::string SimResult::summary_table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-6s %8s %8s %8s %8s %8s %8s\n", "DEVICE", "SYNCED", "BEACONS",
                "VERIFIED", "STALE", "COMPROM", "REVOKED", "OTHER");
  out << line;
  for (const auto& [id, s] : devices) {
    std::size_t other = 0;
    for (const auto& [v, n] : s.verdicts) {
      if (v != Verdict::verified && v != Verdict::stale && v != Verdict::compromised && v != Verdict::revoked) {
        other += n;
      }
    }
    std::snprintf(line, sizeof line, "%-12.12s %-6s %8zu %8zu %8zu %8zu %8zu %8zu\n", s.name.c_str(),
                  s.synced ? "yes" : "no", s.beacons_sent, count_of(s.verdicts, Verdict::verified),
                  count_of(s.verdicts, Verdict::stale), count_of(s.verdicts, Verdict::compromised),
                  count_of(s.verdicts, Verdict::revoked), other);
    out << line;
  }
  out << "total:";
  for (Verdict v : kAllVerdicts) {
    if (auto n = count_of(verdicts, v)) out << ' ' << receiver::to_string(v) << '=' << n;
  }
  out << " duplicates=" << duplicates << '\n';
  return out.str();
}

SimResult run_scenario(const Scenario& scenario) {
  Simulation sim(scenario);
  return sim.run();
}

SimResult run_scenario(const std::filesystem::path& path) { return run_scenario(load_scenario(path)); }

}  // namespace paisa::simnet
