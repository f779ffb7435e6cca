// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "paisa/simnet.hpp"
#include "world.hpp"

namespace {

using namespace paisa;
using receiver::Verdict;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

const std::string kScenarios = PAISA_SCENARIO_DIR;
const std::string kData = PAISA_TEST_DATA_DIR;
const auto kThermostat = fixed_from_hex<16>("0a1b2c3d4e5f60718293a4b5c6d7e8f9");
constexpr EpochSeconds kEpoch = 1'800'000'000;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

simnet::SimResult run_named(const std::string& name) {
  return simnet::run_scenario(std::filesystem::path(kScenarios + "/" + name + ".json"));
}

std::vector<json> events(const simnet::SimResult& r, std::string_view name) {
  std::vector<json> out;
  for (const auto& line : r.log) {
    auto j = json::parse(line);
    if (j["event"] == name) out.push_back(std::move(j));
  }
  return out;
}

std::string one_device(const std::string& adversary, std::uint32_t horizon = 200) {
  return R"({"name":"acceptance","seed":21,"horizon":)" + std::to_string(horizon) +
         R"(,"devices":[{"id":"0a1b2c3d4e5f60718293a4b5c6d7e8f9","t_announce":10,"t_attest":30,"image_size":8192}],"adversary":)" +
         adversary + "}";
}

// 1. Wire sizes and golden bytes.
Outcome wire_sizes() {
  Outcome o;
  const auto keys = crypto::generate_keypair(ByteView(testing::seed_bytes(0)));
  const wire::DeviceId id = testing::device_id(0);
  wire::AnnouncementMsg msg;
  msg.nonce.fill(0x5a);
  msg.timestamp = kEpoch;
  msg.short_url = wire::ShortUrl("pai.sa/Ab3Z");
  msg.att = wire::AttReport{true, kEpoch - 10};
  msg.signature = crypto::sign(keys.private_key, wire::announcement_digest(id, msg));

  const Bytes anno = wire::encode_announcement(msg);
  o.check(anno.size() == 116, "announcement is " + std::to_string(anno.size()) + " bytes, want 116");
  o.check(32 + 4 + 11 + 5 + 64 == layout::kAnnouncement, "announcement field widths do not sum to 116");

  const wire::MacAddress mac{0x02, 0x01, 0x02, 0x03, 0x04, 0x05};
  const Bytes beacon = wire::encode_beacon(msg, mac, 1'000'000);
  o.check(to_hex(beacon) == read_text(kData + "/beacon_golden.hex"), "beacon differs from golden hex");
  o.check(beacon.size() == 240, "beacon is " + std::to_string(beacon.size()) + " bytes, want 240");
  if (o.pass) o.detail = "116-byte announcement, 240-byte beacon, golden bytes match";
  return o;
}

// 2. Honest 3-device run.
Outcome honest_run() {
  Outcome o;
  const auto r = run_named("honest");
  o.check(r.devices.size() == 3, "expected 3 devices");
  for (const auto& [id, s] : r.devices) {
    const auto it = s.verdicts.find(Verdict::verified);
    const std::size_t verified = it == s.verdicts.end() ? 0 : it->second;
    o.check(verified == 61, s.name + ": " + std::to_string(verified) + " verified");
    o.check(s.verdicts.size() == 1, s.name + ": non-verified verdicts present");
  }
  o.check(r.verdicts.size() == 1, "other verdicts present");
  if (o.pass) o.detail = "3 x 61 verified, 0 other";
  return o;
}

// 3. Single-bit mutations of in-flight frames never verify.
Outcome unforgeability() {
  Outcome o;
  testing::World w(0, manifest::Status::active, device::TimerConfig{10, 30});
  device::Device second(std::make_unique<crypto::DeterministicRandom>(std::uint64_t{77}));
  w.add(second, 0x40);
  w.sync(w.dev, kEpoch, 0);
  w.sync(second, kEpoch, 0);
  receiver::ServerFetcher fetcher(*w.srv);
  receiver::ReceiverConfig cfg;
  cfg.fetcher = &fetcher;
  cfg.pinned_mfr_keys = {w.srv->public_key()};

  std::vector<std::pair<Bytes, EpochSeconds>> frames;
  for (auto* d : {&w.dev, &second}) {
    frames.emplace_back(d->finish_boot(0).at(0), kEpoch);
    for (std::uint64_t t = 1; t <= 300; ++t) {
      auto out = d->tick(t);
      if (d->last_announcement_count() == 1) frames.emplace_back(out[0], kEpoch + static_cast<EpochSeconds>(t));
    }
  }
  for (const auto& [f, at] : frames) {
    const auto r = receiver::process_frame(f, cfg, at);
    o.check(std::get<receiver::PresenceReport>(r).verdict == Verdict::verified, "unmutated frame did not verify");
  }
  if (!o.pass) return o;

  // Payload offset inside the beacon and the mutable field ranges within it.
  constexpr std::size_t kPayload = layout::kBeacon - layout::kAnnouncement;
  const std::pair<std::size_t, std::size_t> fields[] = {
      {32, 4},    // timestamp
      {36, 11},   // short URL
      {47, 5},    // attestation report
      {52, 64},   // signature
  };
  std::mt19937_64 rng(0x5eed);
  std::size_t verified = 0;
  std::size_t trials = 0;
  std::map<Verdict, std::size_t> seen;
  std::size_t not_paisa = 0;
  for (int i = 0; i < 12000; ++i) {
    const auto& [frame, at] = frames[rng() % frames.size()];
    const auto& [start, len] = fields[rng() % 4];
    const std::size_t byte = kPayload + start + rng() % len;
    Bytes f = frame;
    f[byte] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
    ++trials;
    const auto r = receiver::process_frame(f, cfg, at);
    if (const auto* rep = std::get_if<receiver::PresenceReport>(&r)) {
      ++seen[rep->verdict];
      if (rep->verdict == Verdict::verified) ++verified;
    } else {
      ++not_paisa;
    }
  }
  o.check(trials >= 10000, "fewer than 10000 mutations");
  o.check(verified == 0, std::to_string(verified) + " mutated frames verified");
  std::ostringstream d;
  d << trials << " mutations, 0 verified (";
  for (const auto& [v, n] : seen) d << receiver::to_string(v) << "=" << n << " ";
  d << "not_paisa=" << not_paisa << ")";
  if (o.pass) o.detail = d.str();
  return o;
}

// 4. Freshness grid, replay at epsilon+1, dedupe within epsilon.
Outcome freshness_and_replay() {
  Outcome o;
  std::size_t mismatches = 0;
  std::size_t cells = 0;
  for (long eps : {0L, 1L, 5L, 10L}) {
    for (long skew : {0L, 2L}) {
      for (long dev = 0; dev <= 50; ++dev) {
        for (long udev = 0; udev <= 50; ++udev) {
          receiver::Freshness want = receiver::Freshness::fresh;
          if (dev <= udev - eps) {
            want = receiver::Freshness::stale;
          } else if (dev > udev + skew) {
            want = receiver::Freshness::future;
          }
          ++cells;
          if (receiver::check_freshness(static_cast<EpochSeconds>(dev), static_cast<EpochSeconds>(udev),
                                        static_cast<std::uint32_t>(eps), static_cast<std::uint32_t>(skew)) != want) {
            ++mismatches;
          }
        }
      }
    }
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " grid mismatches");

  std::size_t replays = 0;
  for (std::uint32_t index = 0; index < 15; ++index) {
    const auto r = simnet::run_scenario(simnet::parse_scenario(
        one_device(R"({"replay":[{"link":"beacon","index":)" + std::to_string(index) + R"(,"delay":11}]})")));
    const auto injected = events(r, "inject");
    for (const auto& v : events(r, "verdict")) {
      if (!injected.empty() && v["id"] == injected[0]["id"]) {
        ++replays;
        o.check(v["verdict"] == "stale", "replay of beacon " + std::to_string(index) + " was " +
                                             v["verdict"].get<std::string>());
      }
    }
  }
  o.check(replays == 15, "not every replay reached the receiver");

  for (std::uint32_t delay = 0; delay <= 10; ++delay) {
    const auto r = simnet::run_scenario(simnet::parse_scenario(
        one_device(R"({"replay":[{"link":"beacon","index":4,"delay":)" + std::to_string(delay) + "}]}")));
    o.check(r.duplicates == 1, "replay after " + std::to_string(delay) + " s not deduplicated");
    o.check(r.presence.size() == 1, "replay after " + std::to_string(delay) + " s created a presence entry");
    o.check(r.verdicts.size() == 1, "replay after " + std::to_string(delay) + " s produced a verdict");
  }
  if (o.pass) {
    o.detail = std::to_string(cells) + " grid cells, 15/15 replays at eps+1 stale, 11/11 in-window copies deduplicated";
  }
  return o;
}

// 5. Compromise does not change announcement timing.
Outcome compromise_timeliness() {
  Outcome o;
  const auto honest = run_named("honest");
  const auto r = run_named("compromise");
  std::size_t total_honest = 0;
  std::size_t total = 0;
  for (const auto& [id, s] : r.devices) {
    total += s.beacons_sent;
    total_honest += honest.devices.at(id).beacons_sent;
    o.check(s.beacons_sent == honest.devices.at(id).beacons_sent, s.name + " announcement count changed");
  }
  std::size_t compromised = 0;
  for (const auto& rep : r.reports) {
    if (rep.device_id != kThermostat) continue;
    if (rep.att_timestamp >= kEpoch + 60) {
      o.check(rep.verdict == Verdict::compromised,
              "report with att_ts " + std::to_string(rep.att_timestamp - kEpoch) + " is " +
                  std::string(receiver::to_string(rep.verdict)));
      ++compromised;
    }
  }
  o.check(compromised > 0, "no compromised reports");
  if (o.pass) {
    o.detail = std::to_string(total) + " announcements (honest " + std::to_string(total_honest) + "), " +
               std::to_string(compromised) + " compromised after t=60";
  }
  return o;
}

// 6. Time Sync from the event logs.
Outcome time_sync() {
  Outcome o;
  const auto r = run_named("sync_drop");
  std::uint32_t issued = 0;
  std::uint32_t committed = 0;
  for (const auto& e : events(r, "device_sync")) {
    if (e["result"] == "synced") issued = e["ts"];
  }
  bool req_rejected = false;
  bool ack_rejected = false;
  for (const auto& e : events(r, "server")) {
    if (e["result"] == "committed") committed = e["latest_ts"];
    const bool rejected = e["result"] == "timestamp_mismatch" || e["result"] == "unknown_session";
    if (rejected && committed != 0) {
      o.check(e["latest_ts"] == committed, "rejected message changed latest_ts");
      if (e["step"] == "sync_req") req_rejected = true;
      if (e["step"] == "sync_ack") ack_rejected = true;
    }
  }
  o.check(issued != 0 && committed == issued, "latest_ts did not advance to the issued ts_cur");
  o.check(r.server_latest_ts.at(kThermostat) == issued, "final latest_ts differs from issued ts_cur");
  o.check(req_rejected, "replayed SyncReq not rejected");
  o.check(ack_rejected, "replayed SyncAck not rejected");
  const auto attempts = events(r, "sync_attempt").size();
  o.check(attempts >= 2 && attempts <= 5, "converged after " + std::to_string(attempts) + " attempts");
  o.check(events(r, "drop").size() == 2, "expected two dropped responses");
  if (o.pass) {
    o.detail = "latest_ts -> ts_cur, replayed req/ack rejected, converged on attempt " + std::to_string(attempts);
  }
  return o;
}

// 7. Manifest field binding and revocation.
Outcome manifest_binding() {
  Outcome o;
  testing::World w;
  const manifest::Manifest m = w.reg.manifest;
  o.check(manifest::verify_manifest(m).valid, "signed manifest does not verify");
  const std::vector<std::pair<std::string, std::function<void(manifest::Manifest&)>>> mutations = {
      {"device_id", [](auto& x) { x.device_id[0] ^= 1; }},
      {"device_type_model", [](auto& x) { x.device_type_model += "!"; }},
      {"manufacturer", [](auto& x) { x.manufacturer += "!"; }},
      {"manufacture_date_location", [](auto& x) { x.manufacture_date_location += "!"; }},
      {"sensors", [](auto& x) { x.sensors.emplace_back("camera"); }},
      {"actuators", [](auto& x) { x.actuators.emplace_back("lock"); }},
      {"deployment_purpose", [](auto& x) { x.deployment_purpose += "!"; }},
      {"network_interfaces", [](auto& x) { x.network_interfaces.emplace_back("ble"); }},
      {"owner_id", [](auto& x) { x.owner_id += "!"; }},
      {"deployment_location", [](auto& x) { x.deployment_location += "!"; }},
      {"sw_hash", [](auto& x) { x.sw_hash.bytes[0] ^= 1; }},
      {"device_public_key", [](auto& x) { x.device_public_key.bytes[0] ^= 1; }},
      {"full_url", [](auto& x) { x.full_url += "x"; }},
      {"status", [](auto& x) { x.status = manifest::Status::revoked; }},
  };
  for (const auto& [name, mutate] : mutations) {
    manifest::Manifest copy = m;
    mutate(copy);
    o.check(!manifest::verify_manifest(copy).valid, name + " mutation still verifies");
  }
  const auto r = run_named("revoked");
  const auto it = r.verdicts.find(Verdict::revoked);
  o.check(it != r.verdicts.end() && it->second > 0 && r.verdicts.size() == 1, "revoked scenario not all revoked");
  if (o.pass) {
    o.detail = std::to_string(mutations.size()) + "/" + std::to_string(mutations.size()) +
               " field mutations rejected, revoked scenario -> " + std::to_string(it->second) + " revoked";
  }
  return o;
}

double seconds_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e9;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

// 8. Desk-scale timing substitute for the hardware latency figures.
Outcome timing() {
  Outcome o;
  testing::World w(0, manifest::Status::active, device::TimerConfig{}, 64 * 1024);
  w.sync(w.dev);
  std::vector<double> samples;
  for (int i = 0; i < 50; ++i) {
    const auto t0 = Clock::now();
    const auto report = w.dev.attest(kEpoch);
    const auto msg = w.dev.make_announcement(report, kEpoch);
    const Bytes frame = wire::encode_beacon(msg, w.dev.mac());
    samples.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    if (frame.size() != layout::kBeacon) o.check(false, "bad frame");
  }
  std::sort(samples.begin(), samples.end());
  const double median_ms = samples[samples.size() / 2];
  const double worst_ms = samples.back();
  o.check(median_ms < 50.0, "median announcement path " + std::to_string(median_ms) + " ms");

  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t kib = 64; kib <= 1024; kib += 64) {
    const Bytes image = testing::pattern(kib * 1024);
    xs.push_back(static_cast<double>(kib));
    ys.push_back(seconds_best_of(7, [&] { (void)crypto::hash_chunked(image, device::kAttestChunk); }));
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  const double cov = sxy - sx * sy / n;
  const double r2 = cov * cov / ((sxx - sx * sx / n) * (syy - sy * sy / n));
  o.check(r2 > 0.99, "attestation fit R^2 = " + std::to_string(r2));
  char buf[160];
  std::snprintf(buf, sizeof buf, "64 KiB announce median %.2f ms (max %.2f), attestation R^2 %.5f over 64 KiB-1 MiB",
                median_ms, worst_ms, r2);
  if (o.pass) o.detail = buf;
  return o;
}

// 9. Byte-identical logs for repeated runs.
Outcome determinism() {
  Outcome o;
  std::size_t runs = 0;
  for (const char* name : {"honest", "replay", "compromise", "sync_drop", "ack_lost", "revoked", "lossy"}) {
    auto sc = simnet::load_scenario(kScenarios + "/" + name + ".json");
    for (std::uint64_t seed : {sc.seed, sc.seed + 1000}) {
      sc.seed = seed;
      const auto a = simnet::run_scenario(sc);
      const auto b = simnet::run_scenario(sc);
      ++runs;
      o.check(a.log_text() == b.log_text(), std::string(name) + " seed " + std::to_string(seed) + " log differs");
    }
  }
  if (o.pass) o.detail = std::to_string(runs) + " (scenario, seed) pairs reproduced byte for byte";
  return o;
}

struct Criterion {
  int number;
  const char* title;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {1, "wire-size fidelity", 1.0, wire_sizes},
      {2, "honest-run protocol correctness", 5.0, honest_run},
      {3, "unforgeability under single-bit mutation", 60.0, unforgeability},
      {4, "freshness and replay", 10.0, freshness_and_replay},
      {5, "timeliness under compromise", 5.0, compromise_timeliness},
      {6, "Time Sync state machine", 5.0, time_sync},
      {7, "manifest binding", 5.0, manifest_binding},
      {8, "desk-scale timing", 0.0, timing},
      {9, "determinism", 5.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    if (c.budget_seconds > 0 && elapsed >= c.budget_seconds) {
      o.check(false, "took " + std::to_string(elapsed) + " s, budget " + std::to_string(c.budget_seconds) + " s");
    }
    if (!o.pass) ++failures;
    std::printf("criterion %d: %s  %s (%.3f s) - %s\n", c.number, o.pass ? "PASS" : "FAIL", c.title, elapsed,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
