#include <gtest/gtest.h>

#include <cstring>
#include <set>

#include "xpnet/nic.hpp"
#include "xpnet/recovery.hpp"
#include "xpnet/transport_xp.hpp"

namespace xpnet {
namespace {

std::vector<std::byte> Pattern(std::size_t n, std::uint8_t salt = 0) {
  std::vector<std::byte> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::byte>((i * 131 + salt) & 0xff);
  return v;
}

WorkRequest Wr(Verb verb, std::span<std::byte> buf, SimTime timeout = Millis(1)) {
  WorkRequest wr;
  wr.verb = verb;
  wr.buffer = buf;
  wr.timeout = timeout;
  return wr;
}

Packet Data(std::uint32_t seq, std::uint64_t off, std::uint32_t len, bool last = false) {
  Packet p;
  p.kind = PacketKind::kData;
  p.verb = Verb::kSend;
  p.wqe_seq = seq;
  p.placement_offset = off;
  p.payload_len = len;
  p.payload.assign(len, std::byte{0xAB});
  p.is_last = last;
  return p;
}

// ---------------------------------------------------------------------------
// Sender

TEST(PostSend, SequenceStartsAtZero) {
  XpSender s;
  auto buf = Pattern(100);
  EXPECT_EQ(s.PostSend(Wr(Verb::kSend, buf), {}), 0u);
}

TEST(PostSend, ThreePostsNumberedInOrder) {
  XpSender s;
  auto buf = Pattern(100);
  EXPECT_EQ(s.PostSend(Wr(Verb::kSend, buf), {}), 0u);
  EXPECT_EQ(s.PostSend(Wr(Verb::kWrite, buf), {}), 1u);
  EXPECT_EQ(s.PostSend(Wr(Verb::kWriteWithImm, buf), {}), 2u);
}

TEST(PostSend, ExhaustedSequenceSpace) {
  XpSender s(XpSenderOptions{kDefaultMtu, 0xFFFFFFFFull});
  auto buf = Pattern(100);
  EXPECT_EQ(s.PostSend(Wr(Verb::kSend, buf), {}), 0xFFFFFFFFu);
  EXPECT_THROW(s.PostSend(Wr(Verb::kSend, buf), {}), LimitError);
}

TEST(PostSend, RejectsReceiveVerbsAndBadRequests) {
  XpSender s;
  auto buf = Pattern(100);
  EXPECT_THROW(s.PostSend(Wr(Verb::kRecv, buf), {}), InvalidArgument);
  EXPECT_THROW(s.PostSend(Wr(Verb::kRead, buf), {}), InvalidArgument);
  EXPECT_THROW(s.PostSend(Wr(Verb::kSend, buf, Nanos(0)), {}), InvalidArgument);
  EXPECT_EQ(s.next_wqe_seq(), 0u);
}

TEST(Fragment, TenKilobytes) {
  auto buf = Pattern(10 * 1024);
  const auto pkts = Fragment(Wr(Verb::kSend, buf), 4096);
  ASSERT_EQ(pkts.size(), 3u);
  const std::uint64_t offs[] = {0, 4096, 8192};
  const std::uint32_t lens[] = {4096, 4096, 2048};
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(pkts[i].placement_offset, offs[i]);
    EXPECT_EQ(pkts[i].payload_len, lens[i]);
    EXPECT_EQ(pkts[i].is_last, i == 2);
    EXPECT_EQ(pkts[i].stride, 1u);
  }
}

TEST(Fragment, SingleByte) {
  auto buf = Pattern(1);
  const auto pkts = Fragment(Wr(Verb::kSend, buf), 4096);
  ASSERT_EQ(pkts.size(), 1u);
  EXPECT_EQ(pkts[0].placement_offset, 0u);
  EXPECT_EQ(pkts[0].payload_len, 1u);
  EXPECT_TRUE(pkts[0].is_last);
}

TEST(Fragment, RemoteOffsetIsAbsolute) {
  auto buf = Pattern(5000);
  WorkRequest wr = Wr(Verb::kWrite, buf);
  wr.remote_offset = 1 << 20;
  const auto pkts = Fragment(wr, 4096);
  ASSERT_EQ(pkts.size(), 2u);
  EXPECT_EQ(pkts[0].placement_offset, 1u << 20);
  EXPECT_EQ(pkts[1].placement_offset, (1u << 20) + 4096);
}

TEST(Fragment, StrideTwoFollowsLayoutAndRoundTrips) {
  // 8192 bytes = two blocks of p = 1024 fp32 elements.
  std::vector<float> x(2048);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i);
  auto bytes = std::as_writable_bytes(std::span<float>(x));
  WorkRequest wr = Wr(Verb::kSend, bytes);
  wr.stride = 2;
  const auto pkts = Fragment(wr, 4096);
  ASSERT_EQ(pkts.size(), 2u);

  EncodedTensor shape;
  shape.values = x;
  shape.block_size = 1024;
  shape.num_blocks = 2;
  shape.original_len = 2048;
  const auto layout = StrideLayout(shape, 2);
  ASSERT_EQ(layout.size(), 2u);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(pkts[j].placement_offset, 0u);
    EXPECT_EQ(pkts[j].stride_index, j);
    std::vector<float> payload(1024);
    std::memcpy(payload.data(), pkts[j].payload.data(), 4096);
    for (std::size_t k = 0; k < 1024; ++k) EXPECT_EQ(payload[k], static_cast<float>(layout[j][k]));
  }

  std::vector<std::byte> dst(8192, std::byte{0});
  for (const auto& p : pkts) {
    for (const Segment& s : PlacementSegments(p.placement_offset, p.stride, p.stride_index, p.payload_len)) {
      std::memcpy(dst.data() + s.dst_offset, p.payload.data() + s.src_offset, s.len);
    }
  }
  EXPECT_TRUE(std::equal(dst.begin(), dst.end(), bytes.begin()));
}

TEST(Fragment, StrideRequiresWholeGroups) {
  auto buf = Pattern(4096);
  WorkRequest wr = Wr(Verb::kSend, buf);
  wr.stride = 2;
  EXPECT_THROW(Fragment(wr, 4096), InvalidArgument);
}

TEST(SenderComplete, AtLastFragmentTransmit) {
  XpSender s;
  auto buf = Pattern(3 * 4096);
  const auto seq = s.PostSend(Wr(Verb::kSend, buf), Nanos(0));
  ASSERT_TRUE(s.HasPendingPacket(Nanos(10)));
  s.NextPacket(Nanos(10));
  s.NextPacket(Nanos(20));
  // Fragments still queued: no CQE yet.
  EXPECT_TRUE(s.PollCq().empty());
  const Packet last = s.NextPacket(Nanos(30));
  EXPECT_TRUE(last.is_last);
  const auto cq = s.PollCq();
  ASSERT_EQ(cq.size(), 1u);
  EXPECT_EQ(cq[0].wqe_seq, seq);
  EXPECT_EQ(cq[0].status, CompletionStatus::kComplete);
  EXPECT_EQ(cq[0].completed_at, Nanos(30));
  EXPECT_EQ(cq[0].received_bytes, 3u * 4096);
  EXPECT_FALSE(s.HasPendingPacket(Nanos(40)));
  EXPECT_FALSE(s.OnTimer(seq, Nanos(50)).has_value());
}

TEST(SenderComplete, SingleFragmentAtSendTime) {
  XpSender s;
  auto buf = Pattern(64);
  s.PostSend(Wr(Verb::kSend, buf), Nanos(0));
  s.NextPacket(Nanos(7));
  const auto cq = s.PollCq();
  ASSERT_EQ(cq.size(), 1u);
  EXPECT_EQ(cq[0].completed_at, Nanos(7));
}

TEST(SenderTimer, DiscardsUnsentFragments) {
  XpSender s;
  auto buf = Pattern(4 * 4096);
  const auto seq = s.PostSend(Wr(Verb::kSend, buf), Nanos(0));
  s.NextPacket(Nanos(1));
  const auto c = s.OnTimer(seq, Nanos(100));
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(c->status, CompletionStatus::kPartialTimeout);
  EXPECT_EQ(c->received_bytes, 4096u);
  EXPECT_EQ(s.suppressed_fragments(), 3u);
  EXPECT_FALSE(s.HasPendingPacket(Nanos(101)));
}

TEST(ReadResponse, DeadlinePassedSendsNothing) {
  XpSender s;
  auto buf = Pattern(3 * 4096);
  s.QueueReadResponse(4, buf, Nanos(5));
  EXPECT_FALSE(s.HasPendingPacket(Nanos(6)));
  EXPECT_EQ(s.suppressed_fragments(), 3u);
}

TEST(ReadResponse, DeadlineMidStreamSuppressesTail) {
  XpSender s;
  auto buf = Pattern(10 * 4096);
  s.QueueReadResponse(4, buf, Nanos(300));
  int sent = 0;
  for (SimTime t = Nanos(0); s.HasPendingPacket(t); t += Nanos(100)) {
    const Packet p = s.NextPacket(t);
    EXPECT_EQ(p.wqe_seq, 4u);
    EXPECT_EQ(p.verb, Verb::kRead);
    ++sent;
  }
  EXPECT_EQ(sent, 4);
  EXPECT_EQ(s.suppressed_fragments(), 6u);
  EXPECT_TRUE(s.PollCq().empty());
}

TEST(ReadResponse, GenerousDeadlineFullMessage) {
  XpSender s;
  auto buf = Pattern(10 * 4096);
  s.QueueReadResponse(1, buf, Millis(1));
  int sent = 0;
  for (SimTime t = Nanos(0); s.HasPendingPacket(t); t += Nanos(100)) {
    s.NextPacket(t);
    ++sent;
  }
  EXPECT_EQ(sent, 10);
  EXPECT_EQ(s.suppressed_fragments(), 0u);
}

// ---------------------------------------------------------------------------
// Receiver

// Posts eight 16 KB receives and moves the active message to wqe_seq 5 by
// placing its last quarter (preempting 0..4).
struct ReceiverAtFive {
  std::vector<std::vector<std::byte>> bufs;
  XpReceiver r;
  ReceiverAtFive() {
    for (int i = 0; i < 8; ++i) bufs.emplace_back(4 * 4096, std::byte{0});
    for (auto& b : bufs) r.PostRecv(Wr(Verb::kRecv, b, Micros(100)), Nanos(0));
    EXPECT_EQ(r.OnPacket(Data(5, 3 * 4096, 4096), Nanos(1)), PlacementAction::kPreemptedThenPlaced);
    EXPECT_EQ(r.PollCq().size(), 5u);
  }
};

TEST(OnPacket, ExpectedSequencePlaced) {
  ReceiverAtFive f;
  ASSERT_EQ(f.r.context().expected_wqe_seq, 5u);
  const auto before = f.r.context().bytes_received;
  EXPECT_EQ(f.r.OnPacket(Data(5, 4096, 4096), Nanos(2)), PlacementAction::kPlaced);
  EXPECT_EQ(f.r.context().bytes_received - before, 4096u);
  EXPECT_EQ(f.bufs[5][4096], std::byte{0xAB});
}

TEST(OnPacket, PlacedFromFreshState) {
  std::vector<std::byte> buf(4 * 4096);
  XpReceiver r;
  r.PostRecv(Wr(Verb::kRecv, buf), Nanos(0));
  EXPECT_EQ(r.OnPacket(Data(0, 4096, 4096), Nanos(1)), PlacementAction::kPlaced);
  EXPECT_EQ(r.context().bytes_received, 4096u);
}

TEST(OnPacket, NewerSequencePreempts) {
  ReceiverAtFive f;
  EXPECT_EQ(f.r.OnPacket(Data(7, 0, 4096), Nanos(3)), PlacementAction::kPreemptedThenPlaced);
  const auto cq = f.r.PollCq();
  ASSERT_EQ(cq.size(), 2u);
  EXPECT_EQ(cq[0].wqe_seq, 5u);
  EXPECT_EQ(cq[0].status, CompletionStatus::kPartialPreempted);
  EXPECT_EQ(cq[0].received_bytes, 4096u);
  EXPECT_EQ(cq[1].wqe_seq, 6u);
  EXPECT_EQ(cq[1].status, CompletionStatus::kPartialPreempted);
  EXPECT_EQ(cq[1].received_bytes, 0u);
  EXPECT_EQ(f.r.context().expected_wqe_seq, 7u);
  EXPECT_EQ(f.r.context().bytes_received, 4096u);
}

TEST(OnPacket, OlderSequenceDroppedLate) {
  ReceiverAtFive f;
  const auto snapshot = f.bufs;
  EXPECT_EQ(f.r.OnPacket(Data(3, 0, 4096), Nanos(3)), PlacementAction::kDroppedLate);
  EXPECT_EQ(f.bufs, snapshot);
  EXPECT_EQ(f.r.context().expected_wqe_seq, 5u);
  EXPECT_TRUE(f.r.PollCq().empty());
}

TEST(OnPacket, DuplicateIgnored) {
  std::vector<std::byte> buf(4 * 4096);
  XpReceiver r;
  r.PostRecv(Wr(Verb::kRecv, buf), Nanos(0));
  r.OnPacket(Data(0, 0, 4096), Nanos(1));
  EXPECT_EQ(r.OnPacket(Data(0, 0, 4096), Nanos(2)), PlacementAction::kDuplicate);
  EXPECT_EQ(r.context().bytes_received, 4096u);
}

TEST(OnPacket, OutOfBoundsRejected) {
  std::vector<std::byte> buf(4096);
  XpReceiver r;
  r.PostRecv(Wr(Verb::kRecv, buf), Nanos(0));
  EXPECT_EQ(r.OnPacket(Data(0, 1, 4096), Nanos(1)), PlacementAction::kMalformed);
  EXPECT_EQ(r.OnPacket(Data(0, ~0ull - 10, 4096), Nanos(1)), PlacementAction::kMalformed);
  // A bad packet for a future message does not preempt.
  EXPECT_EQ(r.OnPacket(Data(3, 0, 4096), Nanos(1)), PlacementAction::kNoReceiveWqe);
  EXPECT_EQ(r.context().expected_wqe_seq, 0u);
}

TEST(OnPacket, StrictModeCompletesOnlyWhenFull) {
  std::vector<std::byte> buf(3 * 4096);
  XpReceiver r;
  r.PostRecv(Wr(Verb::kRecv, buf), Nanos(0));
  r.OnPacket(Data(0, 8192, 4096, true), Nanos(1));
  EXPECT_TRUE(r.PollCq().empty());
  r.OnPacket(Data(0, 0, 4096), Nanos(2));
  r.OnPacket(Data(0, 4096, 4096), Nanos(3));
  const auto cq = r.PollCq();
  ASSERT_EQ(cq.size(), 1u);
  EXPECT_EQ(cq[0].status, CompletionStatus::kComplete);
  EXPECT_EQ(cq[0].received_bytes, 3u * 4096);
  EXPECT_EQ(cq[0].completed_at, Nanos(3));
}

TEST(OnPacket, LastFragmentModeCompletesWithGaps) {
  std::vector<std::byte> buf(3 * 4096);
  XpReceiver r(XpReceiverOptions{CompletionMode::kLastFragment, DuplicateMode::kOffsetSet});
  r.PostRecv(Wr(Verb::kRecv, buf), Nanos(0));
  r.OnPacket(Data(0, 0, 4096), Nanos(1));
  r.OnPacket(Data(0, 8192, 4096, true), Nanos(2));
  const auto cq = r.PollCq();
  ASSERT_EQ(cq.size(), 1u);
  EXPECT_EQ(cq[0].status, CompletionStatus::kComplete);
  EXPECT_TRUE(cq[0].has_gaps());
  EXPECT_EQ(cq[0].missing_bytes(), 4096u);
}

TEST(OnPacket, CountOnlyModeCountsDuplicates) {
  std::vector<std::byte> buf(2 * 4096);
  XpReceiver r(XpReceiverOptions{CompletionMode::kStrict, DuplicateMode::kCountOnly});
  r.PostRecv(Wr(Verb::kRecv, buf), Nanos(0));
  r.OnPacket(Data(0, 0, 4096), Nanos(1));
  EXPECT_EQ(r.OnPacket(Data(0, 0, 4096), Nanos(2)), PlacementAction::kPlaced);
  EXPECT_EQ(r.context().fragments_placed, 2u);
  EXPECT_TRUE(r.context().placed_fragments.empty());
}

TEST(OnTimer, ThreeOfFourPlaced) {
  std::vector<std::byte> buf(4 * 4096);
  XpReceiver r;
  r.PostRecv(Wr(Verb::kRecv, buf, Micros(10)), Nanos(0));
  for (int i = 0; i < 3; ++i) r.OnPacket(Data(0, i * 4096, 4096), Nanos(1 + i));
  EXPECT_FALSE(r.OnTimer(0, Micros(9)).has_value());
  const auto c = r.OnTimer(0, Micros(10));
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(c->status, CompletionStatus::kPartialTimeout);
  EXPECT_EQ(c->received_bytes, 3u * 4096);
  EXPECT_EQ(r.context().expected_wqe_seq, 1u);
}

TEST(OnTimer, NoOpAfterCompletion) {
  std::vector<std::byte> buf(4096);
  XpReceiver r;
  r.PostRecv(Wr(Verb::kRecv, buf, Micros(10)), Nanos(0));
  r.OnPacket(Data(0, 0, 4096, true), Nanos(1));
  EXPECT_EQ(r.PollCq().size(), 1u);
  EXPECT_FALSE(r.OnTimer(0, Micros(10)).has_value());
  EXPECT_TRUE(r.PollCq().empty());
}

TEST(OnTimer, NothingPlaced) {
  std::vector<std::byte> buf(4096);
  XpReceiver r;
  r.PostRecv(Wr(Verb::kRecv, buf, Micros(10)), Nanos(0));
  const auto c = r.OnTimer(0, Micros(10));
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(c->status, CompletionStatus::kPartialTimeout);
  EXPECT_EQ(c->received_bytes, 0u);
}

TEST(OnTimer, NextWqeArmsWhenPredecessorFinalizes) {
  std::vector<std::byte> a(4096), b(4096);
  XpReceiver r;
  r.PostRecv(Wr(Verb::kRecv, a, Micros(10)), Nanos(0));
  r.PostRecv(Wr(Verb::kRecv, b, Micros(10)), Nanos(0));
  ASSERT_EQ(r.armed_deadline(), Micros(10));
  r.OnTimer(0, Micros(10));
  EXPECT_EQ(r.armed_deadline(), Micros(20));
}

TEST(QpContext, FitsProfile) {
  EXPECT_LE(sizeof(XpQpContext), 52u);
  EXPECT_EQ(XpQpContextFieldBytes(), sizeof(XpQpContext));
}

// ---------------------------------------------------------------------------
// Through the NIC and fabric

struct Pair {
  Fabric fabric;
  SimNic a, b;
  QpId qa = 0, qb = 0;
  Pair(const LinkModel& link, std::uint64_t seed, NicConfig cfg = {})
      : fabric(2, link, seed), a(fabric, 0, cfg), b(fabric, 1, cfg) {
    std::tie(qa, qb) = SimNic::Connect(a, b, TransportKind::kXp);
  }
};

TEST(XpNic, LosslessRoundTripUnderReordering) {
  LinkModel link;
  link.jitter = Micros(20);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Pair p(link, seed);
    // One message in flight at a time: fragments reorder within it, and a
    // later message never overtakes it.
    std::vector<std::vector<std::byte>> src(4), dst(4);
    std::uint64_t reordered = 0;
    for (int m = 0; m < 4; ++m) {
      src[m] = Pattern(1000 + 7000 * m + seed, static_cast<std::uint8_t>(m));
      dst[m].assign(src[m].size(), std::byte{0});
      p.b.PostRecv(p.qb, Wr(Verb::kRecv, dst[m], Millis(5)));
      p.a.PostSend(p.qa, Wr(Verb::kSend, src[m], Millis(5)));
      reordered += p.fabric.RunToIdle().reordered;
    }
    EXPECT_GT(reordered, 0u);
    const auto cq = p.b.PollCq();
    ASSERT_EQ(cq.size(), 4u);
    for (const auto& e : cq) {
      EXPECT_EQ(e.completion.status, CompletionStatus::kComplete) << "seed " << seed;
    }
    EXPECT_EQ(src, dst) << "seed " << seed;
  }
}

TEST(XpNic, ByteCounterMatchesDistinctPlacedOffsets) {
  LinkModel link;
  link.jitter = Micros(6);
  link.loss_rate = 0.05;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Pair p(link, seed);
    std::vector<std::vector<std::byte>> src, dst;
    for (int m = 0; m < 6; ++m) {
      src.push_back(Pattern(6 * 4096, static_cast<std::uint8_t>(m)));
      dst.emplace_back(src.back().size(), std::byte{0});
      p.b.PostRecv(p.qb, Wr(Verb::kRecv, dst.back(), Micros(60)));
    }
    for (auto& s : src) p.a.PostSend(p.qa, Wr(Verb::kSend, s, Micros(60)));
    p.fabric.RunToIdle();
    const auto cq = p.b.PollCq();
    ASSERT_EQ(cq.size(), 6u);
    std::uint64_t total = 0;
    for (const auto& e : cq) {
      EXPECT_LE(e.completion.received_bytes, e.completion.message_len);
      // Oracle: fragments of this message that actually landed in the buffer.
      std::uint64_t in_buffer = 0;
      const auto& d = dst[e.completion.wqe_seq];
      const auto& s = src[e.completion.wqe_seq];
      for (std::uint64_t off = 0; off < d.size(); off += 4096) {
        if (std::equal(d.begin() + off, d.begin() + off + 4096, s.begin() + off)) in_buffer += 4096;
      }
      EXPECT_EQ(e.completion.received_bytes, in_buffer) << "seed " << seed;
      total += e.completion.received_bytes;
    }
    EXPECT_EQ(total, p.b.xp_receiver(p.qb).counters().placed_bytes);
  }
}

TEST(XpNic, BoundedProgressUnderTotalLoss) {
  LinkModel link;
  Pair p(link, 1);
  p.fabric.SetDropHook([](const Packet& pkt) { return pkt.kind == PacketKind::kData; });
  std::vector<std::byte> dst(8 * 4096), src = Pattern(8 * 4096);
  p.b.PostRecv(p.qb, Wr(Verb::kRecv, dst, Micros(50)));
  p.a.PostSend(p.qa, Wr(Verb::kSend, src, Micros(50)));
  p.fabric.RunToIdle();
  const auto cq = p.b.PollCq();
  ASSERT_EQ(cq.size(), 1u);
  EXPECT_EQ(cq[0].completion.status, CompletionStatus::kPartialTimeout);
  EXPECT_EQ(cq[0].completion.received_bytes, 0u);
  EXPECT_EQ(cq[0].completion.completed_at, Micros(50));
}

TEST(XpNic, VerbTimerMatrix) {
  LinkModel link;
  Pair p(link, 1);
  auto region = Pattern(64 * 1024);
  std::vector<std::byte> local(64 * 1024);
  p.a.RegisterRegion(p.qa, region);
  p.b.RegisterRegion(p.qb, local);
  auto src = Pattern(4096);
  std::vector<std::byte> rbuf(4096), imm(4096), rd(4096);

  auto armed = [](const SimNic& n, Verb v, CqSide side) {
    int c = 0;
    for (const auto& t : n.armed_timers()) c += t.verb == v && t.side == side;
    return c;
  };

  // SEND/RECV: both sides.
  p.b.PostRecv(p.qb, Wr(Verb::kRecv, rbuf));
  p.a.PostSend(p.qa, Wr(Verb::kSend, src));
  p.fabric.RunToIdle();
  EXPECT_EQ(armed(p.a, Verb::kSend, CqSide::kSender), 1);
  EXPECT_EQ(armed(p.b, Verb::kRecv, CqSide::kReceiver), 1);

  // WRITE: sender only.
  WorkRequest w = Wr(Verb::kWrite, src);
  w.remote_offset = 8192;
  p.a.PostSend(p.qa, w);
  p.fabric.RunToIdle();
  EXPECT_EQ(armed(p.a, Verb::kWrite, CqSide::kSender), 1);
  EXPECT_EQ(p.b.armed_timers().size(), 1u);
  EXPECT_TRUE(std::equal(src.begin(), src.end(), local.begin() + 8192));

  // WRITE_WITH_IMM: sender and the receive WQE it consumes.
  p.b.PostRecv(p.qb, Wr(Verb::kRecv, imm));
  WorkRequest wi = Wr(Verb::kWriteWithImm, src);
  wi.remote_offset = 16384;
  p.a.PostSend(p.qa, wi);
  p.fabric.RunToIdle();
  EXPECT_EQ(armed(p.a, Verb::kWriteWithImm, CqSide::kSender), 1);
  EXPECT_EQ(p.b.armed_timers().size(), 2u);

  // READ: requester only.
  const auto a_before = p.a.armed_timers().size();
  WorkRequest r = Wr(Verb::kRead, rd);
  r.remote_offset = 4096;
  p.b.PostRead(p.qb, r);
  p.fabric.RunToIdle();
  EXPECT_EQ(armed(p.b, Verb::kRead, CqSide::kReceiver), 1);
  EXPECT_EQ(p.a.armed_timers().size(), a_before);
  EXPECT_TRUE(std::equal(rd.begin(), rd.end(), region.begin() + 4096));

  const auto cq = p.b.PollCq();
  std::set<Verb> verbs;
  for (const auto& e : cq) {
    EXPECT_EQ(e.completion.status, CompletionStatus::kComplete);
    verbs.insert(e.verb);
  }
  EXPECT_EQ(verbs, (std::set<Verb>{Verb::kRecv, Verb::kWriteWithImm, Verb::kRead}));
}

TEST(XpNic, ReadRequestCarriesDeadline) {
  LinkModel link;
  Pair p(link, 1);
  auto region = Pattern(16 * 4096);
  p.a.RegisterRegion(p.qa, region);
  std::optional<Packet> req;
  p.fabric.SetDropHook([&](const Packet& pkt) {
    if (pkt.kind == PacketKind::kControl && pkt.verb == Verb::kRead) req = pkt;
    return false;
  });
  std::vector<std::byte> rd(16 * 4096);
  p.b.PostRead(p.qb, Wr(Verb::kRead, rd, Micros(30)));
  p.fabric.RunToIdle();
  ASSERT_TRUE(req.has_value());
  ASSERT_TRUE(req->deadline_hint.has_value());
  EXPECT_EQ(*req->deadline_hint, Micros(30));
}

TEST(XpNic, ReadPastDeadlineSuppressedAtResponder) {
  LinkModel link;
  link.bandwidth_bps = 1e9;  // 32 us per 4 KB fragment
  Pair p(link, 1);
  auto region = Pattern(16 * 4096);
  p.a.RegisterRegion(p.qa, region);
  std::vector<std::byte> rd(16 * 4096);
  p.b.PostRead(p.qb, Wr(Verb::kRead, rd, Micros(120)));
  p.fabric.RunToIdle();
  const auto cq = p.b.PollCq();
  ASSERT_EQ(cq.size(), 1u);
  EXPECT_EQ(cq[0].completion.status, CompletionStatus::kPartialTimeout);
  EXPECT_GT(cq[0].completion.received_bytes, 0u);
  EXPECT_LT(cq[0].completion.received_bytes, rd.size());
  EXPECT_GT(p.a.xp_sender(p.qa).suppressed_fragments(), 0u);
}

TEST(ControlChannel, ReliableUnderLoss) {
  LinkModel link;
  link.loss_rate = 0.05;
  Fabric f(2, link, 3);
  SimNic a(f, 0), b(f, 1);
  std::vector<std::vector<std::byte>> got;
  b.SetControlHandler([&](NodeId from, std::vector<std::byte>&& m, SimTime) {
    EXPECT_EQ(from, 0u);
    got.push_back(std::move(m));
  });
  for (int i = 0; i < 50; ++i) a.SendControl(1, Pattern(64, static_cast<std::uint8_t>(i)));
  f.RunToIdle();
  ASSERT_EQ(got.size(), 50u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(got[i], Pattern(64, static_cast<std::uint8_t>(i)));
}

TEST(ControlChannel, BroadcastToPeers) {
  LinkModel link;
  Fabric f(5, link, 3);
  std::vector<std::unique_ptr<SimNic>> nics;
  int delivered = 0;
  for (NodeId n = 0; n < 5; ++n) {
    nics.push_back(std::make_unique<SimNic>(f, n));
    nics.back()->SetControlHandler([&](NodeId, std::vector<std::byte>&&, SimTime) { ++delivered; });
  }
  for (NodeId n = 1; n < 5; ++n) nics[0]->SendControl(n, Pattern(16));
  f.RunToIdle();
  EXPECT_EQ(delivered, 4);
}

TEST(ControlChannel, OversizeRejected) {
  Fabric f(2, LinkModel{}, 3);
  SimNic a(f, 0), b(f, 1);
  EXPECT_THROW(a.SendControl(1, Pattern(2 * kDefaultMtu)), InvalidArgument);
  EXPECT_THROW(a.SendControl(1, {}), InvalidArgument);
  EXPECT_THROW(a.SendControl(0, Pattern(8)), InvalidArgument);
}

}  // namespace
}  // namespace xpnet
