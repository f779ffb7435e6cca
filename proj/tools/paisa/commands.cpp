#include "commands.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <thread>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "paisa/net.hpp"
#include "paisa/pcap.hpp"
#include "paisa/receiver.hpp"
#include "paisa/server.hpp"
#include "paisa/simnet.hpp"

namespace paisa::cli {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

fs::path default_key_dir() {
  if (const char* dir = std::getenv("PAISA_KEY_DIR"); dir != nullptr && *dir != '\0') return dir;
  return "keys";
}

FixedBytes<32> parse_seed(const std::string& text) {
  if (text.size() == 64) return fixed_from_hex<32>(text);
  char* end = nullptr;
  errno = 0;
  const unsigned long long n = std::strtoull(text.c_str(), &end, 10);
  if (text.empty() || *end != '\0' || errno != 0) {
    throw Error("seed must be a decimal integer or 64 hex digits");
  }
  return crypto::DeterministicRandom(static_cast<std::uint64_t>(n)).bytes<32>();
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Bytes read_binary(const fs::path& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

CommandOutcome failed(const std::string& why, int code = kFailed) { return {code, why, ""}; }

// The store remembers the URL prefix its manifests were published under.
std::string store_base_url(const fs::path& store, const std::string& fallback) {
  const fs::path cfg = store / "config.json";
  if (fs::exists(cfg)) return json::parse(read_text(cfg)).at("base_url").get<std::string>();
  fs::create_directories(store);
  std::ofstream(cfg) << ordered_json{{"base_url", fallback}}.dump(2) << '\n';
  return fallback;
}

}  // namespace

CommandOutcome cmd_keygen(const KeygenOptions& o) {
  try {
    std::optional<FixedBytes<32>> seed;
    if (o.seed) seed = parse_seed(*o.seed);
    const auto keys = seed ? crypto::generate_keypair(ByteView(*seed)) : crypto::generate_keypair();
    if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
    crypto::write_keypair_file(o.out, keys);
    fs::path pub = o.out;
    pub += ".pub";
    crypto::write_public_key_file(pub, keys.public_key);
    return {kOk, "wrote " + o.out.string() + " and " + pub.string(), o.out.string()};
  } catch (const std::exception& e) {
    return failed(std::string("keygen: ") + e.what());
  }
}

CommandOutcome cmd_provision(const ProvisionOptions& o, std::ostream& out) {
  try {
    if (!fs::exists(o.image)) return failed("provision: missing image " + o.image.string());
    const json cfg = json::parse(read_text(o.config));
    server::RegistrationInputs in;
    in.device_id = fixed_from_hex<layout::kDeviceId>(cfg.at("id").get<std::string>());
    in.sw_dev = read_binary(o.image);
    in.ts_cur = o.ts.value_or(net::wall_clock());
    in.timers.t_announce = cfg.value("t_announce", in.timers.t_announce);
    in.timers.t_attest = cfg.value("t_attest", in.timers.t_attest);
    if (cfg.value("status", std::string("active")) == "revoked") in.status = manifest::Status::revoked;
    const json d = cfg.value("description", json::object());
    in.description.device_type_model = d.value("device_type_model", "");
    in.description.manufacturer = d.value("manufacturer", "");
    in.description.manufacture_date_location = d.value("manufacture_date_location", "");
    in.description.sensors = d.value("sensors", std::vector<std::string>{});
    in.description.actuators = d.value("actuators", std::vector<std::string>{});
    in.description.deployment_purpose = d.value("deployment_purpose", "");
    in.description.network_interfaces = d.value("network_interfaces", std::vector<std::string>{});
    in.description.owner_id = d.value("owner_id", "");
    in.description.deployment_location = d.value("deployment_location", "");

    std::unique_ptr<crypto::RandomSource> nonce_rng;
    if (o.seed) {
      const crypto::DeterministicRandom root(parse_seed(*o.seed));
      in.device_key_seed = root.derive("device-key/" + to_hex(in.device_id)).bytes<32>();
    }
    auto srv = server::ManufacturerServer::open(crypto::read_keypair_file(o.keys), o.store,
                                                store_base_url(o.store, o.base_url));
    if (srv->record(in.device_id)) return failed("provision: device " + to_hex(in.device_id) + " already registered");
    device::Device dev;
    const auto reg = srv->register_device(dev, in);
    if (o.state_out.has_parent_path()) fs::create_directories(o.state_out.parent_path());
    dev.save_state(o.state_out);
    out << ordered_json{{"device_id", to_hex(in.device_id)},
                        {"short_url", reg.short_url.str()},
                        {"manifest_url", reg.manifest.full_url},
                        {"latest_ts", reg.record.latest_ts},
                        {"state", o.state_out.string()}}
               .dump()
        << '\n';
    return {kOk, "provisioned " + to_hex(in.device_id) + " at " + reg.short_url.str(), o.state_out.string()};
  } catch (const std::exception& e) {
    return failed(std::string("provision: ") + e.what());
  }
}

CommandOutcome cmd_server(const ServeOptions& o, std::ostream& out, const std::atomic<bool>* stop) {
  try {
    const auto ep = net::Endpoint::parse(o.listen);
    auto srv = server::ManufacturerServer::open(crypto::read_keypair_file(o.keys), o.store,
                                                store_base_url(o.store, "http://" + ep.str()));
    net::UdpSyncServer udp(*srv, ep);
    net::HttpManifestServer http(*srv, net::Endpoint{ep.host, udp.port()});
    udp.start();
    http.start();
    out << ordered_json{{"listening", ep.host + ":" + std::to_string(udp.port())},
                        {"udp", udp.port()},
                        {"http", http.port()},
                        {"base_url", srv->base_url()}}
               .dump()
        << std::endl;
    const auto started = std::chrono::steady_clock::now();
    while (stop == nullptr || !stop->load()) {
      if (o.duration && std::chrono::steady_clock::now() - started >= std::chrono::seconds(*o.duration)) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    udp.stop();
    http.stop();
    return {kOk, "server stopped", ""};
  } catch (const std::exception& e) {
    return failed(std::string("server: ") + e.what());
  }
}

CommandOutcome cmd_device(const DeviceOptions& o, std::ostream& out) {
  try {
    std::unique_ptr<crypto::RandomSource> rng;
    if (o.seed) rng = std::make_unique<crypto::DeterministicRandom>(ByteView(parse_seed(*o.seed)));
    auto dev = device::Device::load_state(o.state, std::move(rng));
    dev.normal_software().program_memory = read_binary(o.image);

    net::UdpSyncTransport transport(net::Endpoint::parse(o.server), std::chrono::milliseconds(o.timeout_ms));
    auto boot = dev.boot(transport, 0);
    if (!boot.synced) {
      out << ordered_json{{"synced", false}, {"attempts", boot.attempts}, {"diagnostic", boot.diagnostic}}.dump()
          << '\n';
      return failed("device: " + boot.diagnostic);
    }
    dev.save_state(o.state);  // ts_prev advanced

    std::optional<pcap::Writer> writer;
    if (o.pcap) writer.emplace(*o.pcap);
    std::size_t beacons = 0;
    const auto emit = [&](const std::vector<Bytes>& frames, std::size_t count, EpochSeconds ts) {
      for (std::size_t i = 0; i < count && i < frames.size(); ++i) {
        if (writer) writer->write(frames[i], ts);
        ++beacons;
      }
    };
    emit(boot.frames, boot.frames.size(), dev.clock().now());
    for (std::uint64_t t = 1; t <= o.duration; ++t) {
      if (o.realtime) std::this_thread::sleep_for(std::chrono::seconds(1));
      const auto frames = dev.tick(t);
      emit(frames, dev.last_announcement_count(), dev.clock().now());
    }
    if (writer) writer->flush();
    out << ordered_json{{"synced", true},
                        {"attempts", boot.attempts},
                        {"ts_prev", dev.ts_prev()},
                        {"beacons", beacons},
                        {"pcap", o.pcap ? o.pcap->string() : std::string()}}
               .dump()
        << '\n';
    return {kOk, "sent " + std::to_string(beacons) + " announcements", o.pcap ? o.pcap->string() : ""};
  } catch (const std::exception& e) {
    return failed(std::string("device: ") + e.what());
  }
}

CommandOutcome cmd_scan(const ScanOptions& o, std::ostream& out) {
  try {
    std::vector<receiver::PresenceReport> reports;
    if (o.input == "sim") {
      if (!o.scenario) return failed("scan: --input sim needs --scenario", kUsage);
      auto sc = simnet::load_scenario(*o.scenario);
      sc.epsilon = o.epsilon;
      sc.future_skew = o.future_skew;
      reports = simnet::run_scenario(sc).reports;
    } else {
      std::unique_ptr<receiver::ManifestFetcher> fetcher;
      if (o.store) {
        fetcher = std::make_unique<receiver::StoreFetcher>(*o.store);
      } else if (o.server_url) {
        fetcher = std::make_unique<net::HttpFetcher>(*o.server_url);
      } else {
        return failed("scan: give --store or --server to retrieve manifests", kUsage);
      }
      receiver::ReceiverConfig cfg;
      cfg.epsilon = o.epsilon;
      cfg.future_skew = o.future_skew;
      cfg.fetcher = fetcher.get();
      for (const auto& p : o.pins) cfg.pinned_mfr_keys.push_back(crypto::read_public_key_file(p));
      receiver::Receiver rx(cfg);
      for (const auto& rec : pcap::read_all(o.input)) {
        auto result = rx.process(rec.frame, o.now.value_or(rec.ts_sec));
        if (auto* r = std::get_if<receiver::PresenceReport>(&result)) reports.push_back(std::move(*r));
      }
    }
    if (o.format == "table") {
      out << receiver::render_table(receiver::dedupe(reports, o.window));
    } else {
      for (const auto& r : reports) out << receiver::to_json_line(r) << '\n';
    }
    std::size_t verified = 0;
    for (const auto& r : reports) verified += r.verdict == receiver::Verdict::verified;
    return {kOk, std::to_string(reports.size()) + " reports, " + std::to_string(verified) + " verified", ""};
  } catch (const std::exception& e) {
    return failed(std::string("scan: ") + e.what());
  }
}

CommandOutcome cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  try {
    auto sc = simnet::load_scenario(o.scenario);
    if (o.seed) sc.seed = *o.seed;
    const auto result = simnet::run_scenario(sc);
    if (o.log) std::ofstream(*o.log, std::ios::binary) << result.log_text();
    if (o.summary) std::ofstream(*o.summary, std::ios::binary) << result.summary_json();
    if (o.pcap) pcap::write_all(*o.pcap, result.frames);
    out << result.summary_table();
    return {kOk, "simulated " + std::to_string(result.log.size()) + " events", o.log ? o.log->string() : ""};
  } catch (const std::exception& e) {
    return failed(std::string("simulate: ") + e.what(), kUsage);
  }
}

namespace {

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"PAISA presence announcements: provisioning, Time Sync, scanning and simulation"};
  app.require_subcommand(1);
  const fs::path keys = default_key_dir() / "manufacturer.key";

  KeygenOptions kg{keys, std::nullopt};
  auto* keygen = app.add_subcommand("keygen", "Generate a P-256 key pair");
  keygen->add_option("-o,--out", kg.out, "Key file (a .pub sibling is written too)");
  keygen->add_option("--seed", kg.seed, "Deterministic seed: integer or 64 hex digits");

  ProvisionOptions pv;
  pv.keys = keys;
  pv.base_url = "http://127.0.0.1:8470";
  auto* provision = app.add_subcommand("provision", "Register a device and write its state file");
  provision->add_option("--store", pv.store, "Server store directory")->required();
  provision->add_option("--keys", pv.keys, "Manufacturer key file");
  provision->add_option("--config", pv.config, "Device description JSON")->required()->check(CLI::ExistingFile);
  provision->add_option("--image", pv.image, "Normal-software image")->required();
  provision->add_option("--state", pv.state_out, "Device state file to write")->required();
  provision->add_option("--base-url", pv.base_url, "Manifest URL prefix for a new store");
  provision->add_option("--seed", pv.seed, "Seed for the device key");
  provision->add_option("--ts", pv.ts, "Provisioning time (epoch seconds)");

  ServeOptions sv;
  sv.keys = keys;
  auto* serve = app.add_subcommand("server", "Run the Time Sync (UDP) and manifest (HTTP) endpoints");
  serve->add_option("--keys", sv.keys, "Manufacturer key file");
  serve->add_option("--store", sv.store, "Server store directory")->required();
  serve->add_option("--listen", sv.listen, "host:port for both UDP and HTTP");
  serve->add_option("--duration", sv.duration, "Stop after this many seconds");

  DeviceOptions dv;
  auto* dev = app.add_subcommand("device", "Boot an emulated device and broadcast announcements");
  dev->add_option("--state", dv.state, "Device state file")->required()->check(CLI::ExistingFile);
  dev->add_option("--image", dv.image, "Normal-software image")->required()->check(CLI::ExistingFile);
  dev->add_option("--server", dv.server, "Time Sync server host:port");
  dev->add_option("--pcap", dv.pcap, "Write broadcast beacons here");
  dev->add_option("--duration", dv.duration, "Device seconds to run after sync");
  dev->add_flag("!--fast", dv.realtime, "Do not sleep between ticks");
  dev->add_option("--timeout-ms", dv.timeout_ms, "Wait per Time Sync attempt");
  dev->add_option("--seed", dv.seed, "Seed for announcement nonces");

  ScanOptions sc;
  std::optional<EpochSeconds> now;
  auto* scan = app.add_subcommand("scan", "Verify announcements from a capture or a simulation");
  scan->add_option("--input", sc.input, "pcap file, or 'sim'")->required();
  scan->add_option("--scenario", sc.scenario, "Scenario for --input sim");
  scan->add_option("--epsilon", sc.epsilon, "Freshness window in seconds");
  scan->add_option("--skew", sc.future_skew, "Allowed future skew in seconds");
  scan->add_option("--pin", sc.pins, "Accept only manifests signed by this key (repeatable)");
  scan->add_option("--store", sc.store, "Read manifests from a server store");
  scan->add_option("--server", sc.server_url, "Fetch manifests over HTTP, e.g. http://127.0.0.1:8470");
  scan->add_option("--now", now, "Reception time for every frame (default: capture time)");
  scan->add_option("--format", sc.format, "jsonl or table")->check(CLI::IsMember({"jsonl", "table"}));
  scan->add_option("--window", sc.window, "Presence table collapse window (seconds)");

  SimulateOptions sm;
  auto* simulate = app.add_subcommand("simulate", "Run a simulator scenario");
  simulate->add_option("--scenario", sm.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--log", sm.log, "Event log (JSON lines)");
  simulate->add_option("--pcap", sm.pcap, "Capture of every delivered beacon");
  simulate->add_option("--summary", sm.summary, "Summary JSON");
  simulate->add_option("--seed", sm.seed, "Override the scenario seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  CommandOutcome outcome;
  if (*keygen) {
    outcome = cmd_keygen(kg);
  } else if (*provision) {
    outcome = cmd_provision(pv, std::cout);
  } else if (*serve) {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    outcome = cmd_server(sv, std::cout, &g_stop);
  } else if (*dev) {
    outcome = cmd_device(dv, std::cout);
  } else if (*scan) {
    sc.now = now;
    if (sc.pins.empty() && sc.input != "sim") std::cerr << "warning: no --pin given; any manufacturer key is accepted\n";
    outcome = cmd_scan(sc, std::cout);
  } else if (*simulate) {
    outcome = cmd_simulate(sm, std::cout);
  }
  std::cerr << outcome.summary << '\n';
  return outcome.exit_code;
}

}  // namespace paisa::cli
