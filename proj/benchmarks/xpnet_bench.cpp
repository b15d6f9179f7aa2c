#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "xpnet/collectives.hpp"
#include "xpnet/fabric.hpp"
#include "xpnet/recovery.hpp"

namespace xpnet {
namespace {

std::vector<float> Gaussian(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.Normal());
  return v;
}

void BM_Fwht(benchmark::State& state) {
  auto v = Gaussian(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    FwhtInPlace(v);
    benchmark::DoNotOptimize(v.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Fwht)->Arg(64)->Arg(1024)->Arg(1 << 16);

void BM_EncodeDecode(benchmark::State& state) {
  const auto t = Gaussian(1 << 20, 2);
  for (auto _ : state) {
    auto d = Decode(Encode(t, 1024));
    benchmark::DoNotOptimize(d.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(t.size() * sizeof(float)));
}
BENCHMARK(BM_EncodeDecode)->Unit(benchmark::kMillisecond);

void BM_LossyPlacement(benchmark::State& state) {
  const auto stride = static_cast<std::uint32_t>(state.range(0));
  const auto enc = Encode(Gaussian(1 << 20, 3), 1024);
  const std::vector<std::uint64_t> lost{3, 17, 200, 511};
  for (auto _ : state) {
    auto copy = enc;
    ZeroLostPackets(copy, stride, lost);
    benchmark::DoNotOptimize(copy.values.data());
  }
}
BENCHMARK(BM_LossyPlacement)->Arg(1)->Arg(64)->Arg(1024)->Unit(benchmark::kMicrosecond);

struct Sink final : Endpoint {
  std::uint64_t packets = 0;
  void OnPacket(Packet&&, SimTime) override { ++packets; }
  void OnTimer(const TimerEvent&, SimTime) override {}
  void OnWake(std::uint64_t, SimTime) override {}
};

void BM_FabricDeliver(benchmark::State& state) {
  LinkModel link;
  link.jitter = Micros(3);
  link.loss_rate = 0.001;
  const auto burst = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Fabric f(2, link, 7);
    Sink a, b;
    f.Attach(0, &a);
    f.Attach(1, &b);
    for (int i = 0; i < burst; ++i) {
      Packet p;
      p.src_node = 0;
      p.dst_node = 1;
      p.wqe_seq = static_cast<std::uint32_t>(i);
      p.payload_len = 4096;
      f.Transmit(std::move(p));
    }
    f.RunToIdle();
    benchmark::DoNotOptimize(b.packets);
  }
  state.SetItemsProcessed(state.iterations() * burst);
}
BENCHMARK(BM_FabricDeliver)->Arg(1024)->Arg(16384);

void BM_RingAllReduce(benchmark::State& state) {
  const auto transport = state.range(0) == 0 ? TransportKind::kXp : TransportKind::kGbn;
  const std::uint32_t n = 8;
  std::vector<std::vector<float>> in;
  for (std::uint32_t r = 0; r < n; ++r) in.push_back(Gaussian(1 << 18, 10 + r));
  std::vector<NodeId> group(n);
  for (std::uint32_t r = 0; r < n; ++r) group[r] = r;
  LinkModel link;
  link.jitter = Micros(3);
  link.loss_rate = 0.001;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Cluster c(n, link, ++seed);
    CollectiveOptions o;
    o.transport = transport;
    RingCollective rc(c, group, o);
    auto res = rc.Run(CollectiveKind::kAllReduce, in);
    benchmark::DoNotOptimize(res.outputs.data());
  }
  state.SetLabel(transport == TransportKind::kXp ? "XP" : "GBN");
}
BENCHMARK(BM_RingAllReduce)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace xpnet

BENCHMARK_MAIN();
