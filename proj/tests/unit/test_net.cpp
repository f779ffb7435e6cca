#include <gtest/gtest.h>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "paisa/net.hpp"
#include "world.hpp"

namespace paisa::net {
namespace {

using paisa::testing::kT0;
using paisa::testing::World;

TEST(EndpointParse, Forms) {
  EXPECT_EQ(Endpoint::parse("127.0.0.1:8470").port, 8470);
  EXPECT_EQ(Endpoint::parse(":9").host, "127.0.0.1");
  EXPECT_THROW(Endpoint::parse("nohost"), Error);
  EXPECT_THROW(Endpoint::parse("h:99999"), Error);
  EXPECT_THROW(Endpoint::parse("h:x"), Error);
}

TEST(Udp, BootOverLoopback) {
  World w;
  UdpSyncServer udp(*w.srv, Endpoint{"127.0.0.1", 0}, [] { return kT0; });
  udp.start();
  UdpSyncTransport tr(Endpoint{"127.0.0.1", udp.port()}, std::chrono::milliseconds(500));
  const auto out = w.dev.boot(tr, 0);
  ASSERT_TRUE(out.synced) << out.diagnostic;
  EXPECT_EQ(w.dev.ts_prev(), kT0);
  for (int i = 0; i < 100 && w.srv->record(w.dev.id())->latest_ts != kT0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  EXPECT_EQ(w.srv->record(w.dev.id())->latest_ts, kT0);
  udp.stop();
}

TEST(Udp, SilentServerTimesOut) {
  World w;
  UdpSyncServer udp(*w.srv, Endpoint{"127.0.0.1", 0});  // never started
  UdpSyncTransport tr(Endpoint{"127.0.0.1", udp.port()}, std::chrono::milliseconds(50));
  const auto out = w.dev.boot(tr, 0, device::BootPolicy{2, 1});
  EXPECT_FALSE(out.synced);
  EXPECT_EQ(out.attempts, 2u);
}

std::uint16_t free_tcp_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a);
  socklen_t len = sizeof a;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
  ::close(fd);
  return ntohs(a.sin_port);
}

// A server whose manifest URLs name the HTTP listener it is served from.
struct LiveWorld {
  std::uint16_t port = free_tcp_port();
  std::string base = "http://127.0.0.1:" + std::to_string(port);
  server::ManufacturerServer srv{crypto::generate_keypair(ByteView(paisa::testing::seed_bytes(0xa0))),
                                 server::ServerOptions{60, base, std::nullopt}};
  device::Device dev{std::make_unique<crypto::DeterministicRandom>(std::uint64_t{5})};
  server::Registration reg;
  HttpManifestServer http{srv, Endpoint{"127.0.0.1", port}};

  LiveWorld() {
    server::RegistrationInputs in;
    in.device_id = paisa::testing::device_id(0);
    in.sw_dev = paisa::testing::pattern(2048);
    in.description = paisa::testing::thermostat();
    in.ts_cur = paisa::testing::kProvisionedAt;
    reg = srv.register_device(dev, in);
    http.start();
  }
};

TEST(Http, ShortLinkRedirectsAndManifestIsServedVerbatim) {
  LiveWorld w;
  HttpFetcher fetcher(w.base);
  const auto got = fetcher.retrieve(w.reg.short_url);
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(got->full_url, w.reg.manifest.full_url);
  EXPECT_EQ(got->document, manifest::to_json(w.reg.manifest));
  EXPECT_FALSE(fetcher.retrieve(wire::ShortUrl("pai.sa/none")).has_value());
  EXPECT_EQ(fetcher.calls(), 2u);
}

TEST(Http, ReceiverVerifiesOverHttp) {
  LiveWorld w;
  auto resp = std::get<sync::SyncResp>(w.srv.handle_sync_req(w.dev.make_sync_req(), kT0));
  (void)w.dev.handle_sync_resp(resp, 0);
  const auto frame = w.dev.finish_boot(0).at(0);
  HttpFetcher fetcher(w.base);
  receiver::ReceiverConfig cfg;
  cfg.fetcher = &fetcher;
  cfg.pinned_mfr_keys = {w.srv.public_key()};
  const auto r = receiver::process_frame(frame, cfg, kT0);
  EXPECT_EQ(std::get<receiver::PresenceReport>(r).verdict, receiver::Verdict::verified);
}

TEST(Http, UnreachableServerIsFetchFailure) {
  HttpFetcher fetcher("http://127.0.0.1:" + std::to_string(free_tcp_port()), std::chrono::milliseconds(200));
  EXPECT_FALSE(fetcher.retrieve(wire::ShortUrl("pai.sa/none")).has_value());
}

}  // namespace
}  // namespace paisa::net
