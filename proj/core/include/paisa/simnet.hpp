#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "paisa/device.hpp"
#include "paisa/pcap.hpp"
#include "paisa/receiver.hpp"
#include "paisa/server.hpp"

// Discrete-event broadcast medium with a virtual clock and a Dolev-Yao adversary.
namespace paisa::simnet {

enum class Link { beacon, sync_up, sync_down };
std::string_view to_string(Link l);

struct Delay {
  std::uint32_t min = 0;
  std::uint32_t max = 0;  // uniform in [min, max]
};

struct LinkPolicy {
  double drop_probability = 0.0;
  Delay delay;
};

/// Drops the first `count` matching messages.
struct DropRule {
  Link link = Link::beacon;
  std::optional<wire::DeviceId> device;
  std::optional<sync::Tag> kind;  // sync links only
  std::uint32_t count = 1;
};

/// XORs `mask` into byte `offset` of matching frames sent in [from, until].
struct TamperRule {
  Link link = Link::beacon;
  std::optional<wire::DeviceId> device;
  std::uint32_t from = 0;
  std::uint32_t until = UINT32_MAX;
  std::size_t offset = 0;
  std::uint8_t mask = 0x01;
};

/// Captures the `index`-th matching message (0-based, in send order) and
/// re-injects the bytes `delay` seconds after the capture.
struct ReplayRule {
  Link link = Link::beacon;
  std::optional<wire::DeviceId> device;
  std::optional<sync::Tag> kind;
  std::uint32_t index = 0;
  std::uint32_t delay = 0;
  std::optional<std::size_t> tamper_offset;  // flip a byte of the copy before re-injecting
  std::uint8_t tamper_mask = 0x01;
};

enum class CompromiseTarget { program_memory, busy, restore };

/// Acts on a device's NormalSoftware only.
struct CompromiseDirective {
  wire::DeviceId device{};
  std::uint32_t at = 0;
  CompromiseTarget target = CompromiseTarget::program_memory;
  std::size_t offset = 0;  // program_memory: byte to flip
};

/// SecureFault analog: the device loses volatile state and boots again.
struct FaultDirective {
  wire::DeviceId device{};
  std::uint32_t at = 0;
};

struct AdversaryPolicy {
  std::map<Link, LinkPolicy> links;
  std::vector<DropRule> drops;
  std::vector<TamperRule> tampers;
  std::vector<ReplayRule> replays;
  std::vector<CompromiseDirective> compromises;
  std::vector<FaultDirective> faults;
};

struct DeviceSpec {
  wire::DeviceId id{};
  std::string name;
  device::TimerConfig timers;
  std::uint32_t boot_at = 0;
  std::size_t image_size = 64 * 1024;
  std::uint32_t app_packets_per_second = 0;  // normal traffic while not busy
  server::Description description;
  manifest::Status status = manifest::Status::active;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  EpochSeconds epoch = 1'800'000'000;
  std::uint32_t horizon = 600;
  std::uint32_t epsilon = 10;
  std::uint32_t future_skew = 2;
  std::uint32_t dedupe_window = 30;
  device::BootPolicy boot;
  std::vector<DeviceSpec> devices;
  AdversaryPolicy adversary;
};

/// Throws Error with a JSON pointer to the offending element. Directives that
/// name trusted state (keys, ts_prev, expected hash, ...) are rejected here.
Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::filesystem::path& path);

struct DeviceStats {
  std::string name;
  std::size_t beacons_sent = 0;
  std::size_t app_packets_sent = 0;
  unsigned boot_attempts = 0;
  bool synced = false;
  std::map<receiver::Verdict, std::size_t> verdicts;
};

struct SimResult {
  std::vector<std::string> log;  // one JSON object per line, no newlines
  std::vector<receiver::PresenceReport> reports;
  std::vector<receiver::PresenceEntry> presence;
  std::map<wire::DeviceId, DeviceStats> devices;
  std::map<receiver::Verdict, std::size_t> verdicts;
  std::size_t duplicates = 0;
  std::map<wire::DeviceId, EpochSeconds> server_latest_ts;
  std::vector<pcap::Record> frames;  // every beacon as delivered

  [[nodiscard]] std::string log_text() const;
  /// Deterministic JSON summary used for golden comparisons.
  [[nodiscard]] std::string summary_json() const;
  [[nodiscard]] std::string summary_table() const;
};

class Simulation {
 public:
  explicit Simulation(Scenario scenario);
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// Runs every event up to and including the horizon.
  SimResult run();

  /// Re-delivers `frame` verbatim to the receiver at virtual time `at`.
  /// Throws Error if `at` is in the past.
  void inject_replay(Bytes frame, std::uint32_t at);
  /// Throws Error for an unknown device.
  void compromise_device(const CompromiseDirective& d);

  [[nodiscard]] std::uint32_t now() const { return now_; }
  [[nodiscard]] const server::ManufacturerServer& server() const;

 private:
  struct Event {
    std::uint32_t time;
    std::uint64_t seq;
    std::function<void()> action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };
  struct Party;
  struct InFlight {
    std::uint64_t id = 0;
    Link link = Link::beacon;
    wire::DeviceId device{};
    std::optional<sync::Tag> kind;
    Bytes bytes;
  };

  void at(std::uint32_t time, std::function<void()> action);
  void emit(std::string line);
  double uniform();
  std::uint32_t draw_delay(const Delay& d);

  void send(Link link, const wire::DeviceId& device, std::optional<sync::Tag> kind, Bytes bytes);
  void deliver(InFlight msg);
  void inject(Link link, const wire::DeviceId& device, std::optional<sync::Tag> kind, Bytes bytes,
              std::optional<std::uint64_t> replay_of);

  void start_boot(Party& p);
  void attempt_sync(Party& p, std::uint64_t generation);
  void on_tick(Party& p);
  void on_server_datagram(const InFlight& msg);
  void on_device_datagram(Party& p, const InFlight& msg);
  void on_beacon(const InFlight& msg);
  Party& party(const wire::DeviceId& id);

  Scenario sc_;
  std::unique_ptr<server::ManufacturerServer> server_;
  std::unique_ptr<receiver::ServerFetcher> fetcher_;
  std::unique_ptr<receiver::Receiver> receiver_;
  std::map<wire::DeviceId, std::unique_ptr<Party>> parties_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t seq_ = 0;
  std::uint64_t next_msg_id_ = 1;
  std::uint32_t now_ = 0;
  std::mt19937_64 rng_;
  std::vector<std::uint32_t> drop_used_;
  std::vector<std::uint32_t> replay_seen_;
  std::set<std::uint64_t> in_flight_;  // sent, not yet delivered
  SimResult result_;
  bool ran_ = false;
};

/// parse + run.
SimResult run_scenario(const Scenario& scenario);
SimResult run_scenario(const std::filesystem::path& path);

}  // namespace paisa::simnet
