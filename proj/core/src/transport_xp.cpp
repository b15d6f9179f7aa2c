#include "xpnet/transport_xp.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

namespace xpnet {

namespace {

constexpr std::uint64_t kMaxWqeSeq = std::numeric_limits<std::uint32_t>::max();

}  // namespace

std::uint64_t FragmentCount(std::uint64_t len, std::uint16_t stride, std::uint32_t mtu_payload) {
  if (mtu_payload == 0) throw InvalidArgument("mtu payload must be > 0");
  if (len == 0) throw InvalidArgument("message length must be > 0");
  if (stride == 0) throw InvalidArgument("stride must be >= 1");
  if (stride == 1) return (len + mtu_payload - 1) / mtu_payload;
  if (mtu_payload % (kElementBytes * stride) != 0) {
    throw InvalidArgument("stride must divide the per-packet element count");
  }
  const std::uint64_t group = static_cast<std::uint64_t>(stride) * mtu_payload;
  if (len % group != 0) {
    throw InvalidArgument("strided message must be a whole number of interleave groups");
  }
  return len / mtu_payload;
}

Packet FragmentAt(std::span<const std::byte> data, std::uint64_t base_offset, std::uint16_t stride,
                  std::uint32_t mtu_payload, std::uint64_t index) {
  const std::uint64_t count = FragmentCount(data.size(), stride, mtu_payload);
  if (index >= count) throw InvalidArgument("fragment index out of range");
  Packet pkt;
  pkt.kind = PacketKind::kData;
  pkt.stride = stride;
  pkt.is_last = index + 1 == count;
  if (stride == 1) {
    const std::uint64_t off = index * mtu_payload;
    const auto n = static_cast<std::uint32_t>(std::min<std::uint64_t>(mtu_payload, data.size() - off));
    pkt.placement_offset = base_offset + off;
    pkt.payload_len = n;
    pkt.payload.assign(data.begin() + static_cast<std::ptrdiff_t>(off),
                       data.begin() + static_cast<std::ptrdiff_t>(off + n));
    return pkt;
  }
  const std::uint64_t group = index / stride;
  const auto j = static_cast<std::uint16_t>(index % stride);
  const std::uint64_t group_base = group * stride * mtu_payload;
  pkt.placement_offset = base_offset + group_base;
  pkt.stride_index = j;
  pkt.payload_len = mtu_payload;
  pkt.payload.resize(mtu_payload);
  for (const Segment& s : PlacementSegments(group_base, stride, j, mtu_payload)) {
    std::memcpy(pkt.payload.data() + s.src_offset, data.data() + s.dst_offset, s.len);
  }
  return pkt;
}

std::vector<Packet> Fragment(const WorkRequest& wr, std::uint32_t mtu_payload) {
  wr.Validate();
  const std::uint64_t count = FragmentCount(wr.buffer.size(), wr.stride, mtu_payload);
  std::vector<Packet> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Packet p = FragmentAt(wr.buffer, wr.remote_offset, wr.stride, mtu_payload, i);
    p.verb = wr.verb;
    p.wqe_seq = wr.wqe_seq;
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------

XpSender::XpSender(XpSenderOptions opts)
    : opts_(opts), next_wqe_seq_(opts.first_wqe_seq), next_wire_seq_(opts.first_wqe_seq) {}

std::uint32_t XpSender::PostSend(WorkRequest wr, SimTime /*now*/) {
  wr.Validate();
  if (wr.verb == Verb::kRecv || wr.verb == Verb::kRead) {
    throw InvalidArgument("PostSend takes SEND, WRITE or WRITE_WITH_IMM");
  }
  if (next_wqe_seq_ > kMaxWqeSeq) throw LimitError("wqe_seq space exhausted (32-bit, no wraparound)");
  const std::uint64_t count = FragmentCount(wr.buffer.size(), wr.stride, opts_.mtu_payload);
  const auto seq = static_cast<std::uint32_t>(next_wqe_seq_++);
  Outgoing o;
  o.wqe_seq = seq;
  // A WRITE consumes no receive WQE at the peer, so it takes no message
  // sequence number.
  o.wire_seq = wr.verb == Verb::kWrite ? seq : static_cast<std::uint32_t>(next_wire_seq_++);
  o.data = wr.buffer;
  o.base_offset = wr.remote_offset;
  o.stride = wr.stride;
  o.num_fragments = count;
  o.tracked = true;
  o.verb = wr.verb;
  queue_.push_back(o);
  return seq;
}

void XpSender::QueueReadResponse(std::uint32_t wqe_seq, std::span<const std::byte> data,
                                 std::optional<SimTime> deadline) {
  Outgoing o;
  o.wqe_seq = wqe_seq;
  o.wire_seq = wqe_seq;
  o.data = data;
  o.num_fragments = FragmentCount(data.size(), 1, opts_.mtu_payload);
  o.tracked = false;
  o.deadline = deadline;
  o.verb = Verb::kRead;
  queue_.push_back(o);
}

bool XpSender::HasPendingPacket(SimTime now) {
  while (!queue_.empty()) {
    Outgoing& o = queue_.front();
    if (!o.tracked && o.deadline && now > *o.deadline) {
      suppressed_ += o.num_fragments - o.next_fragment;
      queue_.pop_front();
      continue;
    }
    return true;
  }
  return false;
}

Packet XpSender::NextPacket(SimTime now) {
  Outgoing& o = queue_.front();
  Packet pkt = FragmentAt(o.data, o.base_offset, o.stride, opts_.mtu_payload, o.next_fragment);
  pkt.verb = o.verb;
  pkt.wqe_seq = o.wire_seq;
  ++o.next_fragment;
  o.bytes_sent += pkt.payload_len;
  if (o.next_fragment == o.num_fragments) {
    if (o.tracked) {
      cq_.push_back(Completion{o.wqe_seq, CompletionStatus::kComplete, o.bytes_sent, o.data.size(), now});
    }
    queue_.pop_front();
  }
  return pkt;
}

std::optional<Completion> XpSender::OnTimer(std::uint32_t wqe_seq, SimTime now) {
  for (std::size_t i = 0; i < queue_.size(); ++i) {
    const Outgoing& o = queue_[i];
    if (!o.tracked || o.wqe_seq != wqe_seq) continue;
    Completion c{o.wqe_seq, CompletionStatus::kPartialTimeout, o.bytes_sent, o.data.size(), now};
    suppressed_ += o.num_fragments - o.next_fragment;
    queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(i));
    cq_.push_back(c);
    return c;
  }
  return std::nullopt;
}

std::vector<Completion> XpSender::PollCq() {
  std::vector<Completion> out(cq_.begin(), cq_.end());
  cq_.clear();
  return out;
}

// ---------------------------------------------------------------------------

std::string_view PlacementActionName(PlacementAction a) {
  switch (a) {
    case PlacementAction::kPlaced:
      return "PLACED";
    case PlacementAction::kPreemptedThenPlaced:
      return "PREEMPTED_THEN_PLACED";
    case PlacementAction::kDroppedLate:
      return "DROPPED_LATE";
    case PlacementAction::kDuplicate:
      return "DUPLICATE";
    case PlacementAction::kMalformed:
      return "MALFORMED";
    case PlacementAction::kNoReceiveWqe:
      return "NO_RECEIVE_WQE";
  }
  return "UNKNOWN";
}

XpReceiver::XpReceiver(XpReceiverOptions opts) : opts_(opts) {}

std::uint32_t XpReceiver::PostRecv(const WorkRequest& wr, SimTime now) {
  wr.Validate();
  if (wr.verb != Verb::kRecv && wr.verb != Verb::kRead) {
    throw InvalidArgument("PostRecv takes RECV or READ work requests");
  }
  if (next_recv_seq_ > kMaxWqeSeq) throw LimitError("wqe_seq space exhausted (32-bit, no wraparound)");
  const auto seq = static_cast<std::uint32_t>(next_recv_seq_++);
  posted_.push_back(PostedRecv{seq, wr.verb, wr.buffer, wr.timeout, now});
  Activate(now);
  return seq;
}

void XpReceiver::Activate(SimTime now) {
  if (armed_ || !HasWqeForActive()) return;
  const PostedRecv& w = posted_.front();
  ctx_.deadline = std::max(now, w.posted_at) + w.timeout;
  ctx_.active = true;
  if (!ctx_.seen_last) ctx_.message_len = w.buffer.size();
  armed_ = true;
}

void XpReceiver::Finalize(CompletionStatus status, SimTime now) {
  if (HasWqeForActive()) {
    const PostedRecv& w = posted_.front();
    const std::uint64_t len = ctx_.message_len ? ctx_.message_len : w.buffer.size();
    cq_.push_back(Completion{w.wqe_seq, status, ctx_.bytes_received, len, now});
    posted_.pop_front();
  }
  ctx_.ResetFor(ctx_.expected_wqe_seq + 1);
  armed_ = false;
  Activate(now);
}

void XpReceiver::AdvanceTo(std::uint32_t wqe_seq, SimTime now) {
  Finalize(CompletionStatus::kPartialPreempted, now);
  while (!posted_.empty() && posted_.front().wqe_seq < wqe_seq) {
    const PostedRecv& w = posted_.front();
    cq_.push_back(Completion{w.wqe_seq, CompletionStatus::kPartialPreempted, 0, w.buffer.size(), now});
    posted_.pop_front();
  }
  ctx_.ResetFor(wqe_seq);
  armed_ = false;
  Activate(now);
}

bool XpReceiver::MaybeComplete(SimTime now) {
  if (!HasWqeForActive() || !ctx_.seen_last) return false;
  if (opts_.completion_mode == CompletionMode::kStrict && ctx_.bytes_received < ctx_.message_len) {
    return false;
  }
  Finalize(CompletionStatus::kComplete, now);
  return true;
}

PlacementAction XpReceiver::OnPacket(const Packet& pkt, SimTime now) {
  if (pkt.kind != PacketKind::kData || pkt.payload_len == 0 ||
      pkt.payload.size() != pkt.payload_len || pkt.verb == Verb::kRecv) {
    ++counters_.malformed;
    return PlacementAction::kMalformed;
  }
  if (pkt.verb == Verb::kWrite) return PlaceWrite(pkt);
  if (pkt.wqe_seq < ctx_.expected_wqe_seq) {
    ++counters_.dropped_late;
    counters_.late_bytes += pkt.payload_len;
    return PlacementAction::kDroppedLate;
  }

  std::vector<Segment> segs;
  try {
    segs = PlacementSegments(pkt.placement_offset, pkt.stride, pkt.stride_index, pkt.payload_len);
  } catch (const InvalidArgument&) {
    ++counters_.malformed;
    return PlacementAction::kMalformed;
  }

  // Resolve the target before touching any state so a bad packet cannot
  // preempt the active message.
  const bool needs_wqe = pkt.verb != Verb::kWrite;
  const PostedRecv* wqe = nullptr;
  if (needs_wqe && !posted_.empty()) {
    const std::uint64_t first = posted_.front().wqe_seq;
    if (pkt.wqe_seq >= first && pkt.wqe_seq - first < posted_.size()) {
      wqe = &posted_[pkt.wqe_seq - first];
    }
  }
  if (needs_wqe && wqe == nullptr) {
    ++counters_.no_receive_wqe;
    return PlacementAction::kNoReceiveWqe;
  }
  if (wqe != nullptr) {
    const bool ok = wqe->verb == Verb::kRead ? pkt.verb == Verb::kRead : pkt.verb != Verb::kRead;
    if (!ok) {
      ++counters_.malformed;
      return PlacementAction::kMalformed;
    }
  }
  const bool into_wqe_buffer = pkt.verb == Verb::kSend || pkt.verb == Verb::kRead;
  const std::span<std::byte> target = into_wqe_buffer ? wqe->buffer : region_;
  if (pkt.extent_end() > target.size() || pkt.extent_end() < pkt.placement_offset) {
    ++counters_.malformed;
    return PlacementAction::kMalformed;
  }

  bool preempted = false;
  if (pkt.wqe_seq > ctx_.expected_wqe_seq) {
    ++counters_.preemptions;
    AdvanceTo(pkt.wqe_seq, now);
    preempted = true;
  }

  const std::uint64_t key = segs.front().dst_offset;
  if (opts_.duplicate_mode == DuplicateMode::kOffsetSet) {
    if (!ctx_.placed_fragments.insert(key).second) {
      ++counters_.duplicates;
      return PlacementAction::kDuplicate;
    }
  }
  for (const Segment& s : segs) {
    std::memcpy(target.data() + s.dst_offset, pkt.payload.data() + s.src_offset, s.len);
  }
  ctx_.bytes_received += pkt.payload_len;
  ++ctx_.fragments_placed;
  ctx_.active = true;
  ++counters_.placed;
  counters_.placed_bytes += pkt.payload_len;
  if (pkt.is_last) {
    ctx_.seen_last = true;
    if (into_wqe_buffer) ctx_.message_len = pkt.extent_end();
  }
  MaybeComplete(now);
  return preempted ? PlacementAction::kPreemptedThenPlaced : PlacementAction::kPlaced;
}

PlacementAction XpReceiver::PlaceWrite(const Packet& pkt) {
  std::vector<Segment> segs;
  try {
    segs = PlacementSegments(pkt.placement_offset, pkt.stride, pkt.stride_index, pkt.payload_len);
  } catch (const InvalidArgument&) {
    ++counters_.malformed;
    return PlacementAction::kMalformed;
  }
  if (pkt.extent_end() > region_.size() || pkt.extent_end() < pkt.placement_offset) {
    ++counters_.malformed;
    return PlacementAction::kMalformed;
  }
  for (const Segment& s : segs) {
    std::memcpy(region_.data() + s.dst_offset, pkt.payload.data() + s.src_offset, s.len);
  }
  ++counters_.placed;
  counters_.placed_bytes += pkt.payload_len;
  return PlacementAction::kPlaced;
}

std::optional<Completion> XpReceiver::OnTimer(std::uint32_t wqe_seq, SimTime now) {
  if (!armed_ || wqe_seq != ctx_.expected_wqe_seq || now < ctx_.deadline) return std::nullopt;
  ++counters_.timeouts;
  Finalize(CompletionStatus::kPartialTimeout, now);
  return cq_.back();
}

std::vector<Completion> XpReceiver::PollCq() {
  std::vector<Completion> out(cq_.begin(), cq_.end());
  cq_.clear();
  return out;
}

}  // namespace xpnet
