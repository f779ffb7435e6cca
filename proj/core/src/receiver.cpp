#include "paisa/receiver.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>
#include "paisa/server.hpp"

namespace paisa::receiver {

namespace fs = std::filesystem;

std::string_view to_string(Freshness f) {
  switch (f) {
    case Freshness::fresh: return "fresh";
    case Freshness::stale: return "stale";
    case Freshness::future: return "future";
  }
  return "unknown";
}

namespace {

constexpr std::pair<Verdict, std::string_view> kVerdictNames[] = {
    {Verdict::verified, "verified"},
    {Verdict::stale, "stale"},
    {Verdict::future, "future"},
    {Verdict::bad_manifest_signature, "bad_manifest_signature"},
    {Verdict::bad_announcement_signature, "bad_announcement_signature"},
    {Verdict::revoked, "revoked"},
    {Verdict::redirect_mismatch, "redirect_mismatch"},
    {Verdict::compromised, "compromised"},
    {Verdict::fetch_failed, "fetch_failed"},
};

}  // namespace

std::string_view to_string(Verdict v) {
  for (const auto& [value, name] : kVerdictNames) {
    if (value == v) return name;
  }
  return "unknown";
}

std::optional<Verdict> verdict_from_string(std::string_view s) {
  for (const auto& [value, name] : kVerdictNames) {
    if (name == s) return value;
  }
  return std::nullopt;
}

std::optional<Retrieved> ManifestFetcher::retrieve(const wire::ShortUrl& key) {
  ++calls_;
  auto url = resolve(key);
  if (!url) return std::nullopt;
  auto doc = fetch(*url);
  if (!doc) return std::nullopt;
  return Retrieved{std::move(*url), std::move(*doc)};
}

namespace {

// Path component of scheme://authority/path, or the input when no scheme is present.
std::string url_path(std::string_view url) {
  const auto scheme = url.find("://");
  if (scheme == std::string_view::npos) return std::string(url);
  const auto slash = url.find('/', scheme + 3);
  return slash == std::string_view::npos ? "/" : std::string(url.substr(slash));
}

std::optional<std::string> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::optional<std::string> ServerFetcher::resolve(const wire::ShortUrl& key) { return srv_.resolve(key); }

std::optional<std::string> ServerFetcher::fetch(const std::string& full_url) {
  const std::string& base = srv_.base_url();
  if (!full_url.starts_with(base)) return std::nullopt;
  return srv_.serve_manifest(std::string_view(full_url).substr(base.size()));
}

StoreFetcher::StoreFetcher(fs::path store_dir) : dir_(std::move(store_dir)) {
  if (fs::exists(dir_ / "registry.json")) registry_ = manifest::ShortUrlRegistry::load(dir_ / "registry.json");
}

std::optional<std::string> StoreFetcher::resolve(const wire::ShortUrl& key) {
  if (auto url = registry_.resolve(key)) return url;
  // The store may have gained devices since we loaded it.
  if (fs::exists(dir_ / "registry.json")) registry_ = manifest::ShortUrlRegistry::load(dir_ / "registry.json");
  return registry_.resolve(key);
}

std::optional<std::string> StoreFetcher::fetch(const std::string& full_url) {
  const std::string path = url_path(full_url);
  const auto pos = path.rfind("/manifests/");
  if (pos == std::string::npos) return std::nullopt;
  return slurp(dir_ / path.substr(pos + 1));
}

Freshness check_freshness(EpochSeconds ts_dev, EpochSeconds ts_udev, std::uint32_t epsilon,
                          std::uint32_t future_skew) {
  const std::int64_t dev = ts_dev;
  const std::int64_t udev = ts_udev;
  if (!(udev - static_cast<std::int64_t>(epsilon) < dev)) return Freshness::stale;
  if (dev > udev + static_cast<std::int64_t>(future_skew)) return Freshness::future;
  return Freshness::fresh;
}

namespace {

using RetrieveFn = std::function<std::optional<Retrieved>(const wire::ShortUrl&)>;

PresenceReport skeleton(const wire::DecodedBeacon& b, EpochSeconds now) {
  PresenceReport r;
  r.source = b.source;
  r.short_url = b.msg.short_url;
  r.att_result = b.msg.att.passed;
  r.att_timestamp = b.msg.att.timestamp;
  r.announcement_ts = b.msg.timestamp;
  r.received_at = now;
  return r;
}

bool pinned(const ReceiverConfig& cfg, const crypto::PublicKey& pk) {
  return cfg.pinned_mfr_keys.empty() ||
         std::find(cfg.pinned_mfr_keys.begin(), cfg.pinned_mfr_keys.end(), pk) != cfg.pinned_mfr_keys.end();
}

// Stages after freshness.
PresenceReport verify_with_manifest(const wire::DecodedBeacon& b, const ReceiverConfig& cfg,
                                    PresenceReport r, const RetrieveFn& retrieve) {
  const wire::AnnouncementMsg& msg = b.msg;
  auto got = retrieve(msg.short_url);
  if (!got) {
    r.verdict = Verdict::fetch_failed;
    r.detail = "manifest for " + msg.short_url.str() + " unavailable; retry later";
    return r;
  }
  auto parsed = manifest::from_json(got->document);
  if (auto* err = std::get_if<std::string>(&parsed)) {
    r.verdict = Verdict::bad_manifest_signature;
    r.detail = "unparseable manifest: " + *err;
    return r;
  }
  const auto& m = std::get<manifest::Manifest>(parsed);
  r.device_id = m.device_id;
  r.manifest = ManifestSummary{m.device_type_model, m.manufacturer,        m.sensors, m.actuators,
                               m.deployment_purpose, m.deployment_location, m.status};

  if (!pinned(cfg, m.manufacturer_public_key)) {
    r.verdict = Verdict::bad_manifest_signature;
    r.detail = "manufacturer key is not pinned";
    return r;
  }
  if (auto v = manifest::verify_manifest(m); !v.valid) {
    r.verdict = Verdict::bad_manifest_signature;
    r.detail = v.reason;
    return r;
  }
  if (got->full_url != m.full_url) {
    r.verdict = Verdict::redirect_mismatch;
    r.detail = "short URL resolved to " + got->full_url + " but manifest names " + m.full_url;
    return r;
  }
  if (m.status == manifest::Status::revoked) {
    r.verdict = Verdict::revoked;
    return r;
  }
  if (!crypto::verify(m.device_public_key, wire::announcement_digest(m.device_id, msg), msg.signature)) {
    r.verdict = Verdict::bad_announcement_signature;
    return r;
  }
  r.verdict = msg.att.passed ? Verdict::verified : Verdict::compromised;
  return r;
}

std::optional<PresenceReport> freshness_verdict(const wire::DecodedBeacon& b, const ReceiverConfig& cfg,
                                                EpochSeconds now) {
  const Freshness f = check_freshness(b.msg.timestamp, now, cfg);
  if (f == Freshness::fresh) return std::nullopt;
  PresenceReport r = skeleton(b, now);
  r.verdict = f == Freshness::stale ? Verdict::stale : Verdict::future;
  return r;
}

RetrieveFn direct(ManifestFetcher* fetcher) {
  return [fetcher](const wire::ShortUrl& key) -> std::optional<Retrieved> {
    if (fetcher == nullptr) return std::nullopt;
    return fetcher->retrieve(key);
  };
}

}  // namespace

FrameResult process_frame(ByteView frame, const ReceiverConfig& cfg, EpochSeconds now) {
  auto decoded = wire::decode_beacon(frame);
  if (auto* np = std::get_if<wire::NotPaisa>(&decoded)) return *np;
  const auto& b = std::get<wire::DecodedBeacon>(decoded);
  if (auto r = freshness_verdict(b, cfg, now)) return *r;
  return verify_with_manifest(b, cfg, skeleton(b, now), direct(cfg.fetcher));
}

Receiver::Receiver(ReceiverConfig cfg) : cfg_(std::move(cfg)) {}

std::optional<Retrieved> Receiver::cached(const wire::ShortUrl& key, EpochSeconds now) {
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      if (now >= it->second.fetched_at && now - it->second.fetched_at < cfg_.epsilon) return it->second.doc;
      cache_.erase(it);
    }
  }
  auto got = direct(cfg_.fetcher)(key);
  if (got && cfg_.epsilon > 0) {
    std::lock_guard lock(mu_);
    cache_[key] = CacheEntry{now, *got};
  }
  return got;
}

ScanResult Receiver::process(ByteView frame, EpochSeconds now) {
  auto decoded = wire::decode_beacon(frame);
  if (auto* np = std::get_if<wire::NotPaisa>(&decoded)) return *np;
  const auto& b = std::get<wire::DecodedBeacon>(decoded);

  const auto key = crypto::sha256(wire::encode_announcement(b.msg)).bytes;
  {
    std::lock_guard lock(mu_);
    std::erase_if(seen_, [&](const auto& kv) { return now >= kv.second && now - kv.second > cfg_.epsilon; });
    if (auto it = seen_.find(key); it != seen_.end()) return Duplicate{it->second};
    seen_.emplace(key, now);
  }

  if (auto r = freshness_verdict(b, cfg_, now)) return *r;
  bool from_cache = false;
  const RetrieveFn via_cache = [&](const wire::ShortUrl& k) -> std::optional<Retrieved> {
    {
      std::lock_guard lock(mu_);
      auto it = cache_.find(k);
      from_cache = it != cache_.end() && now >= it->second.fetched_at &&
                   now - it->second.fetched_at < cfg_.epsilon;
    }
    return cached(k, now);
  };
  PresenceReport r = verify_with_manifest(b, cfg_, skeleton(b, now), via_cache);
  if (r.verdict != Verdict::verified && from_cache) {
    // A cached manifest must never hide a change; ask the server once more.
    {
      std::lock_guard lock(mu_);
      cache_.erase(b.msg.short_url);
    }
    r = verify_with_manifest(b, cfg_, skeleton(b, now), via_cache);
  }
  return r;
}

namespace {

std::string entry_key(const PresenceReport& r) {
  return r.device_id ? to_hex(*r.device_id) : wire::format_mac(r.source);
}

}  // namespace

bool PresenceTable::add(const PresenceReport& report) {
  std::lock_guard lock(mu_);
  const std::string key = entry_key(report);
  if (auto it = latest_.find(key); it != latest_.end()) {
    PresenceEntry& e = entries_[it->second];
    const bool same = e.latest.verdict == report.verdict;
    if (same && report.received_at >= e.last_seen && report.received_at - e.last_seen <= window_) {
      e.latest = report;
      e.last_seen = report.received_at;
      ++e.count;
      return false;
    }
  }
  entries_.push_back(PresenceEntry{key, report, report.received_at, report.received_at, 1});
  latest_[key] = entries_.size() - 1;
  return true;
}

std::vector<PresenceEntry> PresenceTable::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::vector<PresenceEntry> dedupe(const std::vector<PresenceReport>& reports, std::uint32_t window) {
  PresenceTable table(window);
  for (const auto& r : reports) table.add(r);
  return table.entries();
}

std::string to_json_line(const PresenceReport& r) {
  nlohmann::ordered_json j;
  j["received_at"] = r.received_at;
  j["verdict"] = to_string(r.verdict);
  j["device_id"] = r.device_id ? nlohmann::ordered_json(to_hex(*r.device_id)) : nlohmann::ordered_json();
  j["source"] = wire::format_mac(r.source);
  j["short_url"] = r.short_url.str();
  j["announcement_ts"] = r.announcement_ts;
  j["att_result"] = r.att_result ? 1 : 0;
  j["att_timestamp"] = r.att_timestamp;
  if (r.manifest) {
    const auto& m = *r.manifest;
    j["manifest"] = {{"device_type_model", m.device_type_model},
                     {"manufacturer", m.manufacturer},
                     {"sensors", m.sensors},
                     {"actuators", m.actuators},
                     {"deployment_purpose", m.deployment_purpose},
                     {"deployment_location", m.deployment_location},
                     {"status", manifest::to_string(m.status)}};
  } else {
    j["manifest"] = nullptr;
  }
  if (!r.detail.empty()) j["detail"] = r.detail;
  return j.dump();
}

std::string render_table(const std::vector<PresenceEntry>& entries) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-32s  %-26s  %-22s  %10s  %10s  %5s\n", "DEVICE", "VERDICT", "TYPE",
                "FIRST", "LAST", "SEEN");
  out << line;
  for (const auto& e : entries) {
    const std::string type = e.latest.manifest ? e.latest.manifest->device_type_model : "-";
    std::snprintf(line, sizeof line, "%-32s  %-26s  %-22.22s  %10u  %10u  %5zu\n", e.key.c_str(),
                  std::string(to_string(e.latest.verdict)).c_str(), type.c_str(), e.first_seen, e.last_seen,
                  e.count);
    out << line;
  }
  return out.str();
}

}  // namespace paisa::receiver
