#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "paisa/bytes.hpp"

// Classic libpcap capture files carrying raw 802.11 frames.
namespace paisa::pcap {

inline constexpr std::uint32_t kLinkTypeIeee80211 = 105;
inline constexpr std::uint32_t kLinkTypeRadiotap = 127;

struct Record {
  std::uint32_t ts_sec = 0;
  std::uint32_t ts_usec = 0;
  Bytes frame;
};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);
  void write(ByteView frame, std::uint32_t ts_sec, std::uint32_t ts_usec = 0);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

/// Reads every record. Radiotap captures have their radiotap header stripped so
/// callers always see bare 802.11 frames. Throws Error on a malformed file.
std::vector<Record> read_all(const std::filesystem::path& path);

void write_all(const std::filesystem::path& path, const std::vector<Record>& records);

}  // namespace paisa::pcap
