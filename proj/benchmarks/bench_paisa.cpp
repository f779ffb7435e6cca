#include <benchmark/benchmark.h>

#include "paisa/simnet.hpp"
#include "world.hpp"

namespace {

using namespace paisa;

constexpr EpochSeconds kEpoch = 1'800'000'000;

// Attestation (chunked SHA-256 over program memory) as a function of image size.
void BM_Attest(benchmark::State& state) {
  const Bytes image = testing::pattern(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(crypto::hash_chunked(image, device::kAttestChunk));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_Attest)->RangeMultiplier(2)->Range(64 << 10, 1 << 20)->Unit(benchmark::kMicrosecond);

// Full device-side announcement: attest, sign, encode.
void BM_Announce(benchmark::State& state) {
  testing::World w(0, manifest::Status::active, device::TimerConfig{}, static_cast<std::size_t>(state.range(0)));
  w.sync(w.dev);
  for (auto _ : state) {
    const auto report = w.dev.attest(kEpoch);
    benchmark::DoNotOptimize(wire::encode_beacon(w.dev.make_announcement(report, kEpoch), w.dev.mac()));
  }
}
BENCHMARK(BM_Announce)->Arg(64 << 10)->Arg(1 << 20)->Unit(benchmark::kMicrosecond);

// Signing alone, independent of image size.
void BM_Sign(benchmark::State& state) {
  const auto kp = crypto::generate_keypair(ByteView(testing::seed_bytes(0)));
  const auto d = crypto::sha256(as_bytes("announcement"));
  for (auto _ : state) benchmark::DoNotOptimize(crypto::sign(kp.private_key, d));
}
BENCHMARK(BM_Sign)->Unit(benchmark::kMicrosecond);

// Receiver pipeline for one beacon with an in-process manifest source.
void BM_Verify(benchmark::State& state) {
  testing::World w;
  w.sync(w.dev);
  const Bytes frame = w.dev.finish_boot(0).at(0);
  receiver::ServerFetcher fetcher(*w.srv);
  receiver::ReceiverConfig cfg;
  cfg.fetcher = &fetcher;
  for (auto _ : state) benchmark::DoNotOptimize(receiver::process_frame(frame, cfg, kEpoch));
}
BENCHMARK(BM_Verify)->Unit(benchmark::kMicrosecond);

void BM_DecodeBeacon(benchmark::State& state) {
  testing::World w;
  w.sync(w.dev);
  const Bytes frame = w.dev.finish_boot(0).at(0);
  for (auto _ : state) benchmark::DoNotOptimize(wire::decode_beacon(frame));
}
BENCHMARK(BM_DecodeBeacon);

void BM_HonestScenario(benchmark::State& state) {
  const auto sc = simnet::load_scenario(std::filesystem::path(PAISA_SCENARIO_DIR) / "honest.json");
  for (auto _ : state) benchmark::DoNotOptimize(simnet::run_scenario(sc));
}
BENCHMARK(BM_HonestScenario)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
