#include <gtest/gtest.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "paisa/simnet.hpp"
#include "world.hpp"

namespace paisa::simnet {
namespace {

using receiver::Verdict;
using json = nlohmann::json;

const std::string kScenarios = PAISA_SCENARIO_DIR;
const auto kThermostat = fixed_from_hex<16>("0a1b2c3d4e5f60718293a4b5c6d7e8f9");

SimResult run_named(const std::string& name) { return run_scenario(std::filesystem::path(kScenarios + "/" + name + ".json")); }

std::vector<json> events(const SimResult& r, std::string_view name) {
  std::vector<json> out;
  for (const auto& line : r.log) {
    auto j = json::parse(line);
    if (j["event"] == name) out.push_back(std::move(j));
  }
  return out;
}

std::string minimal(const std::string& adversary, int horizon = 100) {
  return R"({"name":"t","seed":4,"horizon":)" + std::to_string(horizon) + R"(,"devices":[{"id":"0a1b2c3d4e5f60718293a4b5c6d7e8f9","t_announce":10,"t_attest":30,"image_size":4096}],"adversary":)" +
         adversary + "}";
}

TEST(Honest, SixtyOneVerifiedPerDevice) {
  const auto r = run_named("honest");
  ASSERT_EQ(r.devices.size(), 3u);
  for (const auto& [id, stats] : r.devices) {
    EXPECT_EQ(stats.beacons_sent, 61u) << stats.name;
    EXPECT_EQ(stats.verdicts.size(), 1u) << stats.name;
    EXPECT_EQ(stats.verdicts.at(Verdict::verified), 61u) << stats.name;
    EXPECT_TRUE(stats.synced);
    EXPECT_EQ(stats.boot_attempts, 1u);
  }
  EXPECT_EQ(r.verdicts.size(), 1u);
  EXPECT_EQ(r.duplicates, 0u);
  EXPECT_EQ(r.reports.size(), 183u);
  EXPECT_EQ(r.presence.size(), 3u);
}

TEST(Determinism, SameScenarioSameLog) {
  for (const char* name : {"honest", "replay", "lossy", "sync_drop"}) {
    const auto a = run_named(name);
    const auto b = run_named(name);
    EXPECT_EQ(a.log_text(), b.log_text()) << name;
    EXPECT_EQ(a.summary_json(), b.summary_json()) << name;
  }
}

TEST(Determinism, SeedChangesLossyRun) {
  auto sc = load_scenario(kScenarios + "/lossy.json");
  const auto a = run_scenario(sc);
  sc.seed += 1;
  const auto b = run_scenario(sc);
  EXPECT_NE(a.log_text(), b.log_text());
}

TEST(Conservation, EverySendHasExactlyOneFate) {
  for (const char* name : {"honest", "replay", "lossy", "sync_drop", "ack_lost"}) {
    const auto r = run_named(name);
    std::map<std::uint64_t, int> fate;
    std::set<std::uint64_t> sent;
    for (const auto& line : r.log) {
      const auto j = json::parse(line);
      const std::string ev = j["event"];
      if (ev == "send" || ev == "inject") {
        EXPECT_TRUE(sent.insert(j["id"].get<std::uint64_t>()).second);
      } else if (ev == "deliver" || ev == "drop" || ev == "undelivered") {
        ++fate[j["id"].get<std::uint64_t>()];
      }
    }
    for (auto id : sent) EXPECT_EQ(fate[id], 1) << name << " message " << id;
    EXPECT_EQ(fate.size(), sent.size()) << name;
  }
}

TEST(Lossy, OnlyVerifiedOrStaleAndDropsHappen) {
  const auto r = run_named("lossy");
  EXPECT_FALSE(events(r, "drop").empty());
  for (const auto& [v, n] : r.verdicts) {
    EXPECT_TRUE(v == Verdict::verified || v == Verdict::stale) << receiver::to_string(v);
  }
  for (const auto& e : events(r, "verdict")) {
    const auto delivered_at = 1'800'000'000u + e["t"].get<std::uint32_t>();
    const auto ts = e["announcement_ts"].get<std::uint32_t>();
    const bool stale = e["verdict"] == "stale";
    EXPECT_EQ(stale, delivered_at - ts >= 10) << e.dump();
  }
}

TEST(Replay, BundledScenarioVerdicts) {
  const auto r = run_named("replay");
  EXPECT_GE(r.verdicts.at(Verdict::stale), 1u);
  EXPECT_EQ(r.verdicts.at(Verdict::bad_announcement_signature), 1u);
  EXPECT_EQ(r.duplicates, 2u);
  const auto& stats = r.devices.at(kThermostat);
  EXPECT_EQ(stats.verdicts.at(Verdict::verified), stats.beacons_sent);
  // Replays never show up as an extra device.
  const std::string mac = wire::format_mac(device::mac_for(kThermostat));
  for (const auto& e : r.presence) EXPECT_TRUE(e.key == to_hex(kThermostat) || e.key == mac) << e.key;
}

TEST(Replay, DelayOfEpsilonPlusOneIsAlwaysStale) {
  for (std::uint32_t index = 0; index < 10; ++index) {
    auto sc = parse_scenario(minimal(R"({"replay":[{"link":"beacon","index":)" + std::to_string(index) +
                                     R"(,"delay":11}]})", 200));
    const auto r = run_scenario(sc);
    const auto injected = events(r, "inject");
    ASSERT_EQ(injected.size(), 1u);
    const auto id = injected[0]["id"];
    bool seen = false;
    for (const auto& v : events(r, "verdict")) {
      if (v["id"] == id) {
        EXPECT_EQ(v["verdict"], "stale") << index;
        seen = true;
      }
    }
    EXPECT_TRUE(seen) << index;
  }
}

TEST(Replay, IdenticalCopyWithinEpsilonIsDeduplicated) {
  for (std::uint32_t delay = 0; delay <= 10; ++delay) {
    const auto r = run_scenario(parse_scenario(
        minimal(R"({"replay":[{"link":"beacon","index":3,"delay":)" + std::to_string(delay) + "}]}")));
    EXPECT_EQ(r.duplicates, 1u) << delay;
    EXPECT_EQ(r.verdicts.size(), 1u) << delay;
    EXPECT_EQ(r.presence.size(), 1u) << delay;
  }
}

TEST(Replay, ManualInjection) {
  auto sc = parse_scenario(minimal("{}"));
  const auto first = run_scenario(sc);
  ASSERT_FALSE(first.frames.empty());
  Simulation sim(sc);
  sim.inject_replay(first.frames[2].frame, 50);
  const auto r = sim.run();
  EXPECT_EQ(r.verdicts.at(Verdict::stale), 1u);
  Simulation late(sc);
  (void)late.run();
  EXPECT_THROW(late.inject_replay(first.frames[0].frame, 10), Error);
}

TEST(Compromise, AnnouncementsContinueAndCarryCompromisedVerdict) {
  const auto honest = run_named("honest");
  const auto r = run_named("compromise");
  for (const auto& [id, stats] : r.devices) {
    EXPECT_EQ(stats.beacons_sent, honest.devices.at(id).beacons_sent) << stats.name;
  }
  const auto& dev = r.devices.at(kThermostat);
  EXPECT_GT(dev.app_packets_sent, 0u);
  std::size_t after = 0;
  for (const auto& rep : r.reports) {
    if (rep.device_id != kThermostat) {
      EXPECT_EQ(rep.verdict, Verdict::verified);
      continue;
    }
    if (rep.att_timestamp >= 1'800'000'060u) {
      EXPECT_EQ(rep.verdict, Verdict::compromised);
      ++after;
    } else {
      EXPECT_EQ(rep.verdict, Verdict::verified);
    }
  }
  EXPECT_EQ(after, 55u);
}

TEST(Compromise, RestoreRecoversAtNextAttestation) {
  const auto r = run_scenario(parse_scenario(minimal(
      R"({"compromise":[{"device":"0a1b2c3d4e5f60718293a4b5c6d7e8f9","at":15,"target":"program_memory","offset":7},)"
      R"({"device":"0a1b2c3d4e5f60718293a4b5c6d7e8f9","at":45,"target":"restore"}]})")));
  for (const auto& rep : r.reports) {
    const auto att = rep.att_timestamp - 1'800'000'000u;
    const Verdict want = (att >= 30 && att < 60) ? Verdict::compromised : Verdict::verified;
    EXPECT_EQ(rep.verdict, want) << rep.announcement_ts;
  }
}

TEST(Compromise, UnknownDeviceThrows) {
  Simulation sim(parse_scenario(minimal("{}")));
  CompromiseDirective c;
  c.device = testing::device_id(0x99);
  EXPECT_THROW(sim.compromise_device(c), Error);
}

TEST(Isolation, TrustedTargetsRejectedAtLoad) {
  for (const char* target : {"trusted_state", "private_key", "device_key", "device_private_key", "ts_prev",
                             "sw_hash_expected", "expected_hash", "mfr_public_key", "short_url", "timers",
                             "secure_timer", "clock"}) {
    try {
      parse_scenario(minimal(std::string(R"({"compromise":[{"device":"0a1b2c3d4e5f60718293a4b5c6d7e8f9","at":1,"target":")") +
                             target + "\"}]}"));
      ADD_FAILURE() << target << " accepted";
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find("/adversary/compromise/0/target"), std::string::npos) << e.what();
    }
  }
}

TEST(Parse, ErrorsCarryLocation) {
  const auto fails_at = [](const std::string& text, const std::string& where) {
    try {
      parse_scenario(text);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
    }
  };
  fails_at(minimal(R"({"teleport":[]})"), "/adversary/teleport");
  fails_at(minimal(R"({"compromise":[{"device":"0a1b2c3d4e5f60718293a4b5c6d7e8f9","at":1,"target":"gpu"}]})"),
           "/adversary/compromise/0/target");
  fails_at(minimal(R"({"drop":[{"link":"beacon","device":"ffffffffffffffffffffffffffffffff"}]})"),
           "/adversary/drop/0/device");
  fails_at(minimal(R"({"links":{"beacon":{"drop_probability":1.5}}})"), "/adversary/links/beacon/drop_probability");
  fails_at(R"({"devices":[]})", "/devices");
  fails_at(R"({"devices":[{"id":"abc"}]})", "/devices/0/id");
  fails_at(R"({"devices":[{"id":"0a1b2c3d4e5f60718293a4b5c6d7e8f9","t_announce":10,"t_attest":15}]})", "/devices/0");
  fails_at(R"({"devices":[{"id":"0a1b2c3d4e5f60718293a4b5c6d7e8f9"},{"id":"0a1b2c3d4e5f60718293a4b5c6d7e8f9"}]})",
           "/devices/1/id");
  EXPECT_THROW(parse_scenario("{"), Error);
  EXPECT_THROW(load_scenario(kScenarios + "/missing.json"), Error);
}

TEST(TimeSyncScenario, DroppedResponsesRetryAndConverge) {
  const auto r = run_named("sync_drop");
  const auto attempts = events(r, "sync_attempt");
  const auto synced = events(r, "device_sync");
  ASSERT_FALSE(synced.empty());
  EXPECT_LE(attempts.size(), 5u);
  EXPECT_EQ(attempts.size(), 3u);
  std::uint32_t issued = 0;
  for (const auto& e : synced) {
    if (e["result"] == "synced") issued = e["ts"];
  }
  ASSERT_NE(issued, 0u);
  EXPECT_EQ(r.server_latest_ts.at(kThermostat), issued);
  EXPECT_GT(r.devices.at(kThermostat).verdicts.at(Verdict::verified), 0u);
}

TEST(TimeSyncScenario, ReplayedMessagesRejectedWithoutStateChange) {
  const auto r = run_named("sync_drop");
  std::set<std::string> rejected;
  std::uint32_t committed_ts = 0;
  for (const auto& e : events(r, "server")) {
    if (e["result"] == "committed") committed_ts = e["latest_ts"];
    if (e["result"] == "timestamp_mismatch" || e["result"] == "unknown_session") {
      rejected.insert(e["step"].get<std::string>() + ":" + e["result"].get<std::string>());
      ASSERT_NE(committed_ts, 0u);
      EXPECT_EQ(e["latest_ts"], committed_ts);
    }
  }
  EXPECT_TRUE(rejected.contains("sync_req:timestamp_mismatch"));
  EXPECT_TRUE(rejected.contains("sync_ack:unknown_session"));
}

TEST(TimeSyncScenario, LostAckLocksDeviceOutAfterReboot) {
  const auto r = run_named("ack_lost");
  EXPECT_EQ(events(r, "fault").size(), 1u);
  EXPECT_EQ(events(r, "boot_failed").size(), 1u);
  for (const auto& e : events(r, "verdict")) EXPECT_LT(e["t"].get<std::uint32_t>(), 101u);
  EXPECT_FALSE(r.devices.at(kThermostat).synced);
  EXPECT_EQ(r.server_latest_ts.at(kThermostat), 1'799'996'400u);
}

TEST(Revoked, EveryReportRevoked) {
  const auto r = run_named("revoked");
  EXPECT_EQ(r.verdicts.size(), 1u);
  EXPECT_EQ(r.verdicts.at(Verdict::revoked), 7u);
}

TEST(Golden, SummariesMatchCheckedInFiles) {
  for (const char* name : {"honest", "replay", "compromise", "sync_drop", "ack_lost", "revoked", "lossy"}) {
    std::ifstream in(kScenarios + "/golden/" + name + ".json");
    ASSERT_TRUE(in) << name;
    const std::string want{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    EXPECT_EQ(run_named(name).summary_json(), want) << name;
  }
}

TEST(Summary, ListsAllVerdictsInFixedOrder) {
  const auto j = nlohmann::ordered_json::parse(run_named("revoked").summary_json());
  std::vector<std::string> keys;
  for (const auto& [k, v] : j["verdicts"].items()) keys.push_back(k);
  EXPECT_EQ(keys.size(), 9u);
  EXPECT_EQ(keys.front(), "verified");
  EXPECT_EQ(j["verdicts"]["revoked"], 7);
  EXPECT_NE(run_named("revoked").summary_table().find("revoked"), std::string::npos);
}

}  // namespace
}  // namespace paisa::simnet
