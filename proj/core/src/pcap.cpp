#include "paisa/pcap.hpp"

#include <iterator>

namespace paisa::pcap {
namespace {

constexpr std::uint32_t kMagic = 0xa1b2c3d4;
constexpr std::uint32_t kMagicSwapped = 0xd4c3b2a1;
constexpr std::uint32_t kSnapLen = 65535;

std::uint32_t swap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00) | ((v << 8) & 0xff0000) | (v << 24);
}

}  // namespace

Writer::Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot create pcap file " + path.string());
  ByteWriter w;
  w.u32le(kMagic).u16le(2).u16le(4).u32le(0).u32le(0).u32le(kSnapLen).u32le(kLinkTypeIeee80211);
  out_.write(reinterpret_cast<const char*>(w.bytes().data()),
             static_cast<std::streamsize>(w.size()));
}

void Writer::write(ByteView frame, std::uint32_t ts_sec, std::uint32_t ts_usec) {
  ByteWriter w(16 + frame.size());
  const auto len = static_cast<std::uint32_t>(frame.size());
  w.u32le(ts_sec).u32le(ts_usec).u32le(len).u32le(len).raw(frame);
  out_.write(reinterpret_cast<const char*>(w.bytes().data()),
             static_cast<std::streamsize>(w.size()));
  if (!out_) throw Error("pcap write failed");
}

std::vector<Record> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open pcap file " + path.string());
  const Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r(data);
  const std::uint32_t magic = r.u32le();
  if (!r.ok() || (magic != kMagic && magic != kMagicSwapped)) {
    throw Error(path.string() + ": not a pcap file");
  }
  const bool swapped = magic == kMagicSwapped;
  auto u32 = [&] { return swapped ? swap32(r.u32le()) : r.u32le(); };
  r.take(2 + 2 + 4 + 4);
  (void)u32();  // snaplen
  const std::uint32_t linktype = u32();
  if (!r.ok()) throw Error(path.string() + ": truncated pcap header");
  if (linktype != kLinkTypeIeee80211 && linktype != kLinkTypeRadiotap) {
    throw Error(path.string() + ": unsupported link type " + std::to_string(linktype));
  }

  std::vector<Record> records;
  while (r.remaining() > 0) {
    Record rec;
    rec.ts_sec = u32();
    rec.ts_usec = u32();
    const std::uint32_t incl = u32();
    (void)u32();  // original length
    ByteView frame = r.take(incl);
    if (!r.ok()) throw Error(path.string() + ": truncated record");
    if (linktype == kLinkTypeRadiotap) {
      if (frame.size() < 4) throw Error(path.string() + ": short radiotap header");
      const std::size_t rt_len = frame[2] | (frame[3] << 8);
      if (rt_len > frame.size()) throw Error(path.string() + ": bad radiotap length");
      frame = frame.subspan(rt_len);
    }
    rec.frame.assign(frame.begin(), frame.end());
    records.push_back(std::move(rec));
  }
  return records;
}

void write_all(const std::filesystem::path& path, const std::vector<Record>& records) {
  Writer w(path);
  for (const auto& rec : records) w.write(rec.frame, rec.ts_sec, rec.ts_usec);
}

}  // namespace paisa::pcap
