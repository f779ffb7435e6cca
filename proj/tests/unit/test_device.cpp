#include <gtest/gtest.h>

#include <deque>
#include <functional>

#include "world.hpp"

namespace paisa::device {
namespace {

using testing::kT0;
using testing::World;

wire::AnnouncementMsg announcement_of(const Bytes& frame) {
  return std::get<wire::DecodedBeacon>(wire::decode_beacon(frame)).msg;
}

// Transport backed by an in-process server; `lose` decides per attempt whether the response is lost.
class LoopbackTransport : public SyncTransport {
 public:
  LoopbackTransport(server::ManufacturerServer& srv, EpochSeconds now, std::function<bool(int)> lose = {})
      : srv_(srv), now_(now), lose_(std::move(lose)) {}

  std::optional<sync::SyncResp> request(const sync::SyncReq& req) override {
    ++attempts;
    auto r = srv_.handle_sync_req(req, now_);
    if (lose_ && lose_(attempts)) return std::nullopt;
    if (auto* resp = std::get_if<sync::SyncResp>(&r)) return *resp;
    return std::nullopt;
  }
  void acknowledge(const sync::SyncAck& ack) override {
    committed = std::holds_alternative<server::Committed>(srv_.handle_sync_ack(ack, now_));
  }

  int attempts = 0;
  bool committed = false;

 private:
  server::ManufacturerServer& srv_;
  EpochSeconds now_;
  std::function<bool(int)> lose_;
};

TEST(Timers, Validation) {
  EXPECT_NO_THROW((TimerConfig{10, 30}.validate()));
  EXPECT_NO_THROW((TimerConfig{10, 10}.validate()));
  EXPECT_THROW((TimerConfig{0, 10}.validate()), Error);
  EXPECT_THROW((TimerConfig{10, 0}.validate()), Error);
  EXPECT_THROW((TimerConfig{10, 25}.validate()), Error);
}

TEST(Provision, InstallsTrustedStateOnce) {
  World w;
  EXPECT_TRUE(w.dev.provisioned());
  EXPECT_FALSE(w.dev.synced());
  EXPECT_EQ(w.dev.id(), testing::device_id(0));
  EXPECT_EQ(w.dev.public_key(), w.reg.record.device_public_key);
  EXPECT_EQ(w.dev.ts_prev(), testing::kProvisionedAt);
  EXPECT_EQ(w.dev.expected_sw_hash(), crypto::sha256(w.image));
  EXPECT_EQ(w.dev.short_url(), w.reg.short_url);
  ProvisionInputs again;
  again.timers = TimerConfig{};
  EXPECT_THROW(w.dev.provision(again), Error);
}

TEST(Provision, UnprovisionedAccessThrows) {
  Device d;
  EXPECT_FALSE(d.provisioned());
  EXPECT_THROW((void)d.id(), Error);
  EXPECT_THROW(d.make_sync_req(), Error);
  EXPECT_TRUE(d.tick(0).empty());
}

TEST(Mac, LocallyAdministeredUnicast) {
  const auto mac = mac_for(testing::device_id(0x10));
  EXPECT_EQ(mac[0] & 0x03, 0x02);
  EXPECT_NE(mac_for(testing::device_id(0x10)), mac_for(testing::device_id(0x11)));
}

TEST(SyncDevice, RequestSignatureVerifiesUnderDeviceKey) {
  World w;
  const auto req = w.dev.make_sync_req();
  EXPECT_EQ(req.ts_prev, testing::kProvisionedAt);
  EXPECT_TRUE(crypto::verify(w.dev.public_key(), sync::digest(req), req.signature));
}

TEST(SyncDevice, ResponseFailuresLeaveStateUntouched) {
  World w;
  auto first = w.dev.make_sync_req();
  auto resp = std::get<sync::SyncResp>(w.srv->handle_sync_req(first, kT0));

  World other(1);
  EXPECT_EQ(std::get<SyncFailure>(other.dev.handle_sync_resp(resp, 0)), SyncFailure::no_request_outstanding);

  auto wrong_dev = resp;
  wrong_dev.device_id[0] ^= 1;
  EXPECT_EQ(std::get<SyncFailure>(w.dev.handle_sync_resp(wrong_dev, 0)), SyncFailure::wrong_device);
  auto wrong_nonce = resp;
  wrong_nonce.n_dev1[0] ^= 1;
  EXPECT_EQ(std::get<SyncFailure>(w.dev.handle_sync_resp(wrong_nonce, 0)), SyncFailure::nonce_mismatch);
  auto forged_ts = resp;
  forged_ts.ts_cur += 1000;
  EXPECT_EQ(std::get<SyncFailure>(w.dev.handle_sync_resp(forged_ts, 0)), SyncFailure::bad_signature);
  EXPECT_FALSE(w.dev.synced());
  EXPECT_EQ(w.dev.ts_prev(), testing::kProvisionedAt);

  ASSERT_TRUE(std::holds_alternative<sync::SyncAck>(w.dev.handle_sync_resp(resp, 0)));
  EXPECT_TRUE(w.dev.synced());
  EXPECT_EQ(w.dev.ts_prev(), kT0);
  // The nonce is consumed: the same response cannot be applied twice.
  EXPECT_EQ(std::get<SyncFailure>(w.dev.handle_sync_resp(resp, 1)), SyncFailure::no_request_outstanding);
}

TEST(SyncDevice, NewRequestSupersedesOutstandingOne) {
  World w;
  auto r1 = w.dev.make_sync_req();
  auto resp1 = std::get<sync::SyncResp>(w.srv->handle_sync_req(r1, kT0));
  (void)w.dev.make_sync_req();
  EXPECT_EQ(std::get<SyncFailure>(w.dev.handle_sync_resp(resp1, 0)), SyncFailure::nonce_mismatch);
}

TEST(Schedule, AnnouncesEveryTAnnounceAndAttestsEveryTAttest) {
  World w(0, manifest::Status::active, TimerConfig{10, 30});
  w.sync(w.dev, kT0, 0);
  const auto boot = w.dev.finish_boot(0);
  ASSERT_EQ(boot.size(), 1u);
  EXPECT_EQ(announcement_of(boot[0]).timestamp, kT0);

  std::vector<EpochSeconds> announce_ts;
  std::vector<EpochSeconds> att_ts;
  for (std::uint64_t t = 1; t <= 600; ++t) {
    for (const auto& f : w.dev.tick(t)) {
      const auto m = announcement_of(f);
      announce_ts.push_back(m.timestamp);
      att_ts.push_back(m.att.timestamp);
      EXPECT_TRUE(m.att.passed);
      EXPECT_LE(m.att.timestamp, m.timestamp);
      EXPECT_LT(m.timestamp - m.att.timestamp, 30u);
      EXPECT_EQ(m.att.timestamp % 30, 0u);
    }
  }
  ASSERT_EQ(announce_ts.size(), 60u);
  for (std::size_t i = 0; i < announce_ts.size(); ++i) EXPECT_EQ(announce_ts[i], kT0 + 10 * (i + 1));
  EXPECT_EQ(att_ts.back(), kT0 + 600);
}

TEST(Schedule, FinishBootDoesNotRepeatInSameSecond) {
  World w;
  w.sync(w.dev, kT0, 5);
  ASSERT_EQ(w.dev.finish_boot(5).size(), 1u);
  EXPECT_TRUE(w.dev.tick(5).empty());
  EXPECT_EQ(w.dev.last_announcement_count(), 0u);
}

TEST(Schedule, NothingBeforeSync) {
  World w;
  for (std::uint64_t t = 0; t < 50; ++t) EXPECT_TRUE(w.dev.tick(t).empty());
  EXPECT_TRUE(w.dev.finish_boot(0).empty());
}

TEST(Attestation, DetectsProgramMemoryChange) {
  World w;
  w.sync(w.dev);
  EXPECT_TRUE(w.dev.attest(kT0).passed);
  w.dev.normal_software().program_memory[1234] ^= 0x01;
  const auto bad = w.dev.attest(kT0 + 1);
  EXPECT_FALSE(bad.passed);
  EXPECT_EQ(bad.timestamp, kT0 + 1);
  w.dev.normal_software().program_memory[1234] ^= 0x01;
  EXPECT_TRUE(w.dev.attest(kT0 + 2).passed);
}

TEST(Attestation, CompromisedFlagAloneDoesNotChangeResult) {
  World w;
  w.sync(w.dev);
  w.dev.normal_software().compromised = true;
  EXPECT_TRUE(w.dev.attest(kT0).passed);
}

TEST(Attestation, ReportNewerThanAnnouncementThrows) {
  World w;
  w.sync(w.dev);
  EXPECT_THROW(w.dev.make_announcement(wire::AttReport{true, kT0 + 1}, kT0), Error);
}

TEST(Timeliness, BusySoftwareCannotDelayAnnouncements) {
  World w;
  w.sync(w.dev);
  w.dev.finish_boot(0);
  auto& sw = w.dev.normal_software();
  sw.busy = true;
  std::size_t announcements = 0;
  for (std::uint64_t t = 1; t <= 100; ++t) {
    for (int i = 0; i < 50; ++i) sw.outbox.push_back(Bytes(64, 0xaa));
    const auto out = w.dev.tick(t);
    const std::size_t n = w.dev.last_announcement_count();
    announcements += n;
    EXPECT_EQ(out.size(), n + Device::kNormalTxPerTick);
    if (n == 1) {
      EXPECT_TRUE(std::holds_alternative<wire::DecodedBeacon>(wire::decode_beacon(out[0])));
    }
  }
  EXPECT_EQ(announcements, 10u);
}

TEST(Announcement, SignatureVerifiesAndNoncesAreFresh) {
  World w;
  w.sync(w.dev);
  std::set<wire::Nonce> nonces;
  for (int i = 0; i < 100; ++i) {
    const auto m = w.dev.make_announcement(wire::AttReport{true, kT0}, kT0);
    EXPECT_TRUE(crypto::verify(w.dev.public_key(), wire::announcement_digest(w.dev.id(), m), m.signature));
    nonces.insert(m.nonce);
  }
  EXPECT_EQ(nonces.size(), 100u);
}

TEST(Reset, SilencesUntilNextBoot) {
  World w;
  w.sync(w.dev);
  w.dev.finish_boot(0);
  w.dev.reset();
  EXPECT_FALSE(w.dev.synced());
  EXPECT_EQ(w.dev.ts_prev(), kT0);
  for (std::uint64_t t = 1; t <= 30; ++t) EXPECT_TRUE(w.dev.tick(t).empty());
  w.sync(w.dev, kT0 + 40, 40);
  EXPECT_EQ(w.dev.finish_boot(40).size(), 1u);
}

TEST(Boot, SucceedsFirstTry) {
  World w;
  LoopbackTransport tr(*w.srv, kT0);
  const auto out = w.dev.boot(tr, 0);
  EXPECT_TRUE(out.synced);
  EXPECT_EQ(out.attempts, 1u);
  EXPECT_TRUE(tr.committed);
  ASSERT_EQ(out.frames.size(), 1u);
  EXPECT_EQ(w.srv->record(w.dev.id())->latest_ts, kT0);
}

TEST(Boot, RetriesWithBackoffAndConverges) {
  World w;
  LoopbackTransport tr(*w.srv, kT0, [](int attempt) { return attempt < 3; });
  const auto out = w.dev.boot(tr, 100);
  EXPECT_TRUE(out.synced);
  EXPECT_EQ(out.attempts, 3u);
  EXPECT_EQ(out.synced_at, 103u);  // backoff 1 then 2
  EXPECT_EQ(w.dev.diagnostics().size(), 2u);
}

TEST(Boot, GivesUpAfterBudget) {
  World w;
  LoopbackTransport tr(*w.srv, kT0, [](int) { return true; });
  const auto out = w.dev.boot(tr, 0);
  EXPECT_FALSE(out.synced);
  EXPECT_EQ(out.attempts, 5u);
  EXPECT_TRUE(out.frames.empty());
  EXPECT_FALSE(out.diagnostic.empty());
  EXPECT_TRUE(w.dev.tick(100).empty());
}

TEST(State, SaveLoadPreservesTrustedState) {
  World w;
  w.sync(w.dev);
  const auto path = std::filesystem::temp_directory_path() / "paisa_device_state.json";
  w.dev.save_state(path);
  Device back = Device::load_state(path);
  EXPECT_EQ(back.id(), w.dev.id());
  EXPECT_EQ(back.public_key(), w.dev.public_key());
  EXPECT_EQ(back.ts_prev(), kT0);
  EXPECT_EQ(back.timers(), w.dev.timers());
  EXPECT_EQ(back.expected_sw_hash(), w.dev.expected_sw_hash());
  EXPECT_FALSE(back.synced());
  std::filesystem::remove(path);
  EXPECT_THROW(Device::load_state(path), Error);
}

}  // namespace
}  // namespace paisa::device
