#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "paisa/bytes.hpp"

// Entry points behind the `paisa` subcommands. Each returns instead of exiting
// so the commands can be driven from tests.
namespace paisa::cli {

namespace fs = std::filesystem;

struct CommandOutcome {
  int exit_code = 0;
  std::string summary;      // human readable, one line
  std::string machine_output;  // path of the machine-readable artifact, if any
};

enum ExitCode : int { kOk = 0, kFailed = 1, kUsage = 2 };

/// Directory for key files: $PAISA_KEY_DIR, else ./keys.
fs::path default_key_dir();
/// "<decimal>" or 64 hex digits -> 32 seed bytes.
FixedBytes<32> parse_seed(const std::string& text);

struct KeygenOptions {
  fs::path out;
  std::optional<std::string> seed;
};
CommandOutcome cmd_keygen(const KeygenOptions& o);

struct ProvisionOptions {
  fs::path store;
  fs::path keys;
  fs::path config;  // device description JSON
  fs::path image;
  fs::path state_out;
  std::string base_url;  // used when the store is created
  std::optional<std::string> seed;
  std::optional<EpochSeconds> ts;  // provisioning time, default wall clock
};
CommandOutcome cmd_provision(const ProvisionOptions& o, std::ostream& out);

struct ServeOptions {
  fs::path keys;
  fs::path store;
  std::string listen = "127.0.0.1:8470";
  std::optional<std::uint32_t> duration;  // seconds; run until stopped when absent
};
CommandOutcome cmd_server(const ServeOptions& o, std::ostream& out, const std::atomic<bool>* stop = nullptr);

struct DeviceOptions {
  fs::path state;
  fs::path image;
  std::string server = "127.0.0.1:8470";
  std::optional<fs::path> pcap;
  std::uint32_t duration = 30;  // device seconds after sync
  bool realtime = true;          // sleep one wall second per tick
  std::uint32_t timeout_ms = 1000;
  std::optional<std::string> seed;
};
CommandOutcome cmd_device(const DeviceOptions& o, std::ostream& out);

struct ScanOptions {
  std::string input;  // pcap path, or "sim"
  std::optional<fs::path> scenario;
  std::uint32_t epsilon = 10;
  std::uint32_t future_skew = 2;
  std::vector<fs::path> pins;
  std::optional<fs::path> store;
  std::optional<std::string> server_url;
  std::optional<EpochSeconds> now;
  std::string format = "jsonl";  // jsonl | table
  std::uint32_t window = 30;
};
CommandOutcome cmd_scan(const ScanOptions& o, std::ostream& out);

struct SimulateOptions {
  fs::path scenario;
  std::optional<fs::path> log;
  std::optional<fs::path> pcap;
  std::optional<fs::path> summary;
  std::optional<std::uint64_t> seed;
};
CommandOutcome cmd_simulate(const SimulateOptions& o, std::ostream& out);

/// Full argument parsing and dispatch; returns the process exit code.
int run(int argc, char** argv);

}  // namespace paisa::cli
