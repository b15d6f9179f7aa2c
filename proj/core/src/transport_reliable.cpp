#include "xpnet/transport_reliable.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include "xpnet/transport_xp.hpp"

namespace xpnet {

void GbnOptions::Validate() const {
  if (window == 0) throw InvalidArgument("gbn window must be >= 1");
  if (rto.ns == 0) throw InvalidArgument("gbn rto must be > 0");
  if (mtu_payload == 0) throw InvalidArgument("mtu payload must be > 0");
}

SimTime DefaultRto(const LinkModel& link, std::uint32_t k) {
  const SimTime one_way = link.base_delay + SimTime{link.jitter.ns / 2};
  return one_way * (2ull * k);
}

std::uint64_t PacketPsn(const Packet& pkt) {
  if (!pkt.deadline_hint || pkt.deadline_hint->ns == 0) {
    throw InvalidArgument("reliable data packet carries no PSN");
  }
  return pkt.deadline_hint->ns - 1;
}

// ---------------------------------------------------------------------------

GbnSender::GbnSender(GbnOptions opts) : opts_(opts) { opts_.Validate(); }

std::uint32_t GbnSender::Enqueue(Message m) {
  if (next_wqe_seq_ > std::numeric_limits<std::uint32_t>::max()) {
    throw LimitError("wqe_seq space exhausted (32-bit, no wraparound)");
  }
  m.wqe_seq = static_cast<std::uint32_t>(next_wqe_seq_++);
  m.num_fragments = FragmentCount(m.data.size(), 1, opts_.mtu_payload);
  m.first_psn = total_;
  total_ += m.num_fragments;
  msgs_.push_back(std::move(m));
  return msgs_.back().wqe_seq;
}

std::uint32_t GbnSender::PostSend(const WorkRequest& wr, SimTime /*now*/) {
  wr.Validate();
  if (wr.verb == Verb::kRecv || wr.verb == Verb::kRead) {
    throw InvalidArgument("PostSend takes SEND, WRITE or WRITE_WITH_IMM");
  }
  Message m;
  m.verb = wr.verb;
  m.data = wr.buffer;
  m.base_offset = wr.remote_offset;
  return Enqueue(std::move(m));
}

std::uint32_t GbnSender::PostOwned(std::vector<std::byte> bytes, Verb verb, SimTime /*now*/) {
  if (bytes.empty()) throw InvalidArgument("message must not be empty");
  Message m;
  m.verb = verb;
  m.owned = std::make_shared<std::vector<std::byte>>(std::move(bytes));
  m.data = *m.owned;
  return Enqueue(std::move(m));
}

bool GbnSender::CanSend() const { return next_ < total_ && next_ < base_ + opts_.window; }

const GbnSender::Message& GbnSender::MessageFor(std::uint64_t psn) const {
  for (const Message& m : msgs_) {
    if (psn >= m.first_psn && psn < m.first_psn + m.num_fragments) return m;
  }
  throw InvalidArgument("psn not held by the sender");
}

Packet GbnSender::NextPacket(SimTime /*now*/) {
  const std::uint64_t psn = next_;
  const Message& m = MessageFor(psn);
  Packet pkt = FragmentAt(m.data, m.base_offset, 1, opts_.mtu_payload, psn - m.first_psn);
  pkt.verb = m.verb;
  pkt.wqe_seq = m.wqe_seq;
  pkt.deadline_hint = SimTime{psn + 1};
  ++next_;
  ++counters_.transmitted;
  if (psn < high_) {
    ++counters_.retransmitted;
  } else {
    high_ = psn + 1;
  }
  return pkt;
}

bool GbnSender::OnAck(std::uint64_t next_expected, SimTime now) {
  next_expected = std::min(next_expected, high_);
  if (next_expected <= base_) return false;
  base_ = next_expected;
  next_ = std::max(next_, base_);
  while (!msgs_.empty()) {
    const Message& m = msgs_.front();
    const std::uint64_t end = m.first_psn + m.num_fragments;
    if (end > base_) break;
    cq_.push_back(Completion{m.wqe_seq, CompletionStatus::kComplete, m.data.size(), m.data.size(), now});
    msgs_.pop_front();
  }
  return true;
}

void GbnSender::OnNak(std::uint64_t next_expected, SimTime now) {
  ++counters_.naks;
  OnAck(next_expected, now);
  next_ = base_;
}

void GbnSender::OnTimeout(SimTime /*now*/) {
  if (!outstanding()) return;
  ++counters_.timeouts;
  next_ = base_;
}

std::vector<Completion> GbnSender::PollCq() {
  std::vector<Completion> out(cq_.begin(), cq_.end());
  cq_.clear();
  return out;
}

// ---------------------------------------------------------------------------

GbnReceiver::GbnReceiver(GbnOptions opts) : opts_(opts) { opts_.Validate(); }

std::uint32_t GbnReceiver::PostRecv(const WorkRequest& wr, SimTime /*now*/) {
  wr.Validate();
  if (next_recv_seq_ > std::numeric_limits<std::uint32_t>::max()) {
    throw LimitError("wqe_seq space exhausted (32-bit, no wraparound)");
  }
  const auto seq = static_cast<std::uint32_t>(next_recv_seq_++);
  posted_.push_back(PostedRecv{seq, wr.buffer});
  return seq;
}

std::optional<Packet> GbnReceiver::OnData(const Packet& pkt, SimTime now) {
  if (pkt.kind != PacketKind::kData || pkt.payload.size() != pkt.payload_len) return std::nullopt;
  const std::uint64_t psn = PacketPsn(pkt);

  Packet reply;
  reply.src_node = pkt.dst_node;
  reply.dst_node = pkt.src_node;
  reply.kind = PacketKind::kAck;
  reply.verb = pkt.verb;

  if (psn > expected_) {
    ++counters_.out_of_order;
    if (!opts_.nak_enabled || nak_outstanding_) return std::nullopt;
    nak_outstanding_ = true;
    ++counters_.naks_sent;
    reply.placement_offset = expected_;
    reply.stride_index = 1;
    return reply;
  }
  if (psn < expected_) {
    ++counters_.duplicates;
    reply.placement_offset = expected_;
    return reply;
  }

  const bool needs_wqe = pkt.verb == Verb::kSend || pkt.verb == Verb::kWriteWithImm;
  std::span<std::byte> target;
  if (auto_receive_) {
    if (assembling_.size() < pkt.extent_end()) assembling_.resize(pkt.extent_end());
    target = assembling_;
  } else if (needs_wqe && posted_.empty()) {
    // Receiver not ready: no ACK, the sender's timer recovers.
    ++counters_.no_receive_wqe;
    return std::nullopt;
  } else {
    target = pkt.verb == Verb::kSend ? posted_.front().buffer : region_;
  }
  if (pkt.extent_end() > target.size()) return std::nullopt;

  std::memcpy(target.data() + pkt.placement_offset, pkt.payload.data(), pkt.payload_len);
  ++expected_;
  nak_outstanding_ = false;
  ++counters_.accepted;
  if (trace_enabled_) trace_.push_back(psn);
  msg_bytes_ += pkt.payload_len;
  msg_extent_ = std::max(msg_extent_, pkt.extent_end());

  if (pkt.is_last) {
    if (auto_receive_) {
      const auto seq = static_cast<std::uint32_t>(next_recv_seq_++);
      assembling_.resize(msg_extent_);
      delivered_.push_back(DeliveredMessage{seq, std::move(assembling_)});
      assembling_.clear();
      cq_.push_back(Completion{seq, CompletionStatus::kComplete, msg_bytes_, msg_bytes_, now});
    } else if (needs_wqe) {
      const std::uint64_t len = pkt.verb == Verb::kSend ? msg_extent_ : msg_bytes_;
      cq_.push_back(Completion{posted_.front().wqe_seq, CompletionStatus::kComplete, msg_bytes_, len, now});
      posted_.pop_front();
    }
    msg_bytes_ = 0;
    msg_extent_ = 0;
  }
  reply.placement_offset = expected_;
  return reply;
}

std::vector<Completion> GbnReceiver::PollCq() {
  std::vector<Completion> out(cq_.begin(), cq_.end());
  cq_.clear();
  return out;
}

std::vector<DeliveredMessage> GbnReceiver::PollDelivered() {
  std::vector<DeliveredMessage> out = std::move(delivered_);
  delivered_.clear();
  return out;
}

}  // namespace xpnet
