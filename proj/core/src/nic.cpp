#include "xpnet/nic.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>

namespace xpnet {

namespace {

constexpr std::uint32_t kTagXpSender = 0;
constexpr std::uint32_t kTagXpReceiver = 1;
constexpr std::uint32_t kTagRto = 2;
constexpr std::uint32_t kTagXpRead = 3;

}  // namespace

std::string_view TransportName(TransportKind t) {
  return t == TransportKind::kXp ? "XP" : "GBN";
}

// A receive queue with its timer. RECV / WRITE_WITH_IMM targets and READ
// requests are numbered in separate spaces, one RecvSide each.
struct SimNic::RecvSide {
  std::unique_ptr<XpReceiver> rx;
  std::unordered_map<std::uint32_t, Verb> verbs;
  std::optional<EventId> timer;
  std::uint32_t timer_seq = 0;
  SimTime timer_deadline;
};

struct SimNic::Qp {
  QpId id = 0;
  TransportKind kind = TransportKind::kXp;
  NodeId remote_node = 0;
  QpId remote_qp = 0;
  bool control = false;

  std::unique_ptr<XpSender> xs;
  RecvSide recv;
  RecvSide read;
  std::unique_ptr<FeedbackGenerator> fb;
  std::unordered_map<std::uint32_t, EventId> sender_timers;
  std::unordered_map<std::uint32_t, Verb> send_verbs;
  std::unordered_map<std::uint32_t, Verb> recv_verbs;
  std::span<std::byte> region;

  std::unique_ptr<GbnSender> gs;
  std::unique_ptr<GbnReceiver> gr;
  std::optional<EventId> rto_timer;
  std::uint32_t rto_gen = 0;

  std::unique_ptr<RateController> cc;
  double line_rate = 0.0;
  SimTime next_tx_at;
  bool wake_pending = false;
};

SimNic::SimNic(Fabric& fabric, NodeId node, NicConfig cfg)
    : fabric_(fabric), node_(node), cfg_(std::move(cfg)) {
  cfg_.gbn.Validate();
  cfg_.congestion.aimd.Validate();
  fabric_.Attach(node_, this);
}

SimNic::~SimNic() { fabric_.Attach(node_, nullptr); }

SimNic::Qp& SimNic::NewQp(TransportKind kind, NodeId remote_node, QpId id) {
  auto q = std::make_unique<Qp>();
  q->id = id;
  q->kind = kind;
  q->remote_node = remote_node;
  q->line_rate = fabric_.link(node_, remote_node).bandwidth_bps;
  if (kind == TransportKind::kXp) {
    q->xs = std::make_unique<XpSender>(XpSenderOptions{cfg_.mtu_payload, 0});
    q->recv.rx = std::make_unique<XpReceiver>(cfg_.xp);
    q->read.rx = std::make_unique<XpReceiver>(cfg_.xp);
    q->fb = std::make_unique<FeedbackGenerator>(cfg_.congestion.feedback_aggregation, 0);
    q->cc = MakeController(cfg_.congestion);
  } else {
    GbnOptions g = cfg_.gbn;
    g.mtu_payload = cfg_.mtu_payload;
    g.rto = cfg_.gbn_rto.value_or(DefaultRto(fabric_.link(node_, remote_node), cfg_.rto_k));
    q->gs = std::make_unique<GbnSender>(g);
    q->gr = std::make_unique<GbnReceiver>(g);
    q->gr->set_trace_enabled(cfg_.record_gbn_trace);
    q->cc = std::make_unique<NullController>(cfg_.congestion.aimd.min_rate,
                                             cfg_.congestion.aimd.max_rate);
  }
  Qp& ref = *q;
  qps_[id] = std::move(q);
  return ref;
}

SimNic::Qp& SimNic::Get(QpId qp) {
  auto it = qps_.find(qp);
  if (it == qps_.end()) throw InvalidArgument("unknown qp");
  return *it->second;
}

const SimNic::Qp& SimNic::Get(QpId qp) const {
  auto it = qps_.find(qp);
  if (it == qps_.end()) throw InvalidArgument("unknown qp");
  return *it->second;
}

SimNic::Qp& SimNic::ControlQp(NodeId peer) {
  const QpId id = kControlQpBase + peer;
  auto it = qps_.find(id);
  if (it != qps_.end()) return *it->second;
  Qp& q = NewQp(TransportKind::kGbn, peer, id);
  q.remote_qp = kControlQpBase + node_;
  q.control = true;
  q.gr->SetAutoReceive(true);
  return q;
}

std::pair<QpId, QpId> SimNic::Connect(SimNic& a, SimNic& b, TransportKind kind) {
  if (&a.fabric_ != &b.fabric_) throw InvalidArgument("NICs are attached to different fabrics");
  const QpId ia = a.next_qp_id_++;
  const QpId ib = b.next_qp_id_++;
  Qp& qa = a.NewQp(kind, b.node_, ia);
  Qp& qb = b.NewQp(kind, a.node_, ib);
  qa.remote_qp = ib;
  qb.remote_qp = ia;
  return {ia, ib};
}

TransportKind SimNic::transport(QpId qp) const { return Get(qp).kind; }

const XpSender& SimNic::xp_sender(QpId qp) const {
  const Qp& q = Get(qp);
  if (!q.xs) throw InvalidArgument("not an XP qp");
  return *q.xs;
}

const XpReceiver& SimNic::xp_receiver(QpId qp) const {
  const Qp& q = Get(qp);
  if (!q.recv.rx) throw InvalidArgument("not an XP qp");
  return *q.recv.rx;
}

const XpReceiver& SimNic::xp_read_receiver(QpId qp) const {
  const Qp& q = Get(qp);
  if (!q.read.rx) throw InvalidArgument("not an XP qp");
  return *q.read.rx;
}

const GbnSender& SimNic::gbn_sender(QpId qp) const {
  const Qp& q = Get(qp);
  if (!q.gs) throw InvalidArgument("not a GBN qp");
  return *q.gs;
}

const GbnReceiver& SimNic::gbn_receiver(QpId qp) const {
  const Qp& q = Get(qp);
  if (!q.gr) throw InvalidArgument("not a GBN qp");
  return *q.gr;
}

const RateController& SimNic::rate_controller(QpId qp) const { return *Get(qp).cc; }

// ---------------------------------------------------------------------------
// Verbs

std::uint32_t SimNic::PostSend(QpId qp, const WorkRequest& wr) {
  Qp& q = Get(qp);
  const SimTime now = fabric_.now();
  std::uint32_t seq = 0;
  if (q.kind == TransportKind::kXp) {
    seq = q.xs->PostSend(wr, now);
    q.send_verbs[seq] = wr.verb;
    const SimTime deadline = now + wr.timeout;
    q.sender_timers[seq] = fabric_.ScheduleTimer(TimerEvent{node_, q.id, seq, kTagXpSender}, deadline);
    if (cfg_.record_timers) {
      timers_log_.push_back(ArmedTimer{q.id, CqSide::kSender, wr.verb, seq, deadline});
    }
  } else {
    seq = q.gs->PostSend(wr, now);
    q.send_verbs[seq] = wr.verb;
  }
  Pump(q, now);
  return seq;
}

std::uint32_t SimNic::PostRecv(QpId qp, const WorkRequest& wr) {
  Qp& q = Get(qp);
  const SimTime now = fabric_.now();
  if (wr.verb != Verb::kRecv) throw InvalidArgument("PostRecv takes RECV work requests");
  std::uint32_t seq = 0;
  if (q.kind == TransportKind::kXp) {
    seq = q.recv.rx->PostRecv(wr, now);
    q.recv.verbs[seq] = wr.verb;
    SyncRecvTimer(q, q.recv, kTagXpReceiver);
  } else {
    seq = q.gr->PostRecv(wr, now);
    q.recv_verbs[seq] = wr.verb;
  }
  return seq;
}

std::uint32_t SimNic::PostRead(QpId qp, const WorkRequest& wr) {
  Qp& q = Get(qp);
  const SimTime now = fabric_.now();
  if (wr.verb != Verb::kRead) throw InvalidArgument("PostRead takes READ work requests");
  if (q.kind != TransportKind::kXp) throw InvalidArgument("READ is modeled on XP qps only");
  const std::uint32_t seq = q.read.rx->PostRecv(wr, now);
  q.read.verbs[seq] = Verb::kRead;
  SyncRecvTimer(q, q.read, kTagXpRead);

  SimTime deadline = now + wr.timeout;
  if (q.read.rx->context().expected_wqe_seq == seq && q.read.rx->armed_deadline()) {
    deadline = *q.read.rx->armed_deadline();
  }
  Packet req;
  req.kind = PacketKind::kControl;
  req.verb = Verb::kRead;
  req.wqe_seq = seq;
  req.placement_offset = wr.remote_offset;
  req.is_last = true;
  req.deadline_hint = deadline;
  const std::uint64_t len = wr.buffer.size();
  req.payload.resize(sizeof(len));
  for (std::size_t i = 0; i < sizeof(len); ++i) {
    req.payload[i] = static_cast<std::byte>((len >> (8 * i)) & 0xff);
  }
  req.payload_len = sizeof(len);
  SendNow(q, std::move(req));
  return seq;
}

void SimNic::RegisterRegion(QpId qp, std::span<std::byte> region) {
  Qp& q = Get(qp);
  q.region = region;
  if (q.recv.rx) q.recv.rx->RegisterRegion(region);
  if (q.gr) q.gr->RegisterRegion(region);
}

std::vector<CqEntry> SimNic::PollCq() {
  std::vector<CqEntry> out = std::move(cq_);
  cq_.clear();
  return out;
}

void SimNic::SendControl(NodeId peer, std::vector<std::byte> msg) {
  if (msg.empty()) throw InvalidArgument("control message must not be empty");
  if (msg.size() > cfg_.mtu_payload) throw InvalidArgument("control message exceeds one MTU");
  if (peer == node_) throw InvalidArgument("control message addressed to self");
  Qp& q = ControlQp(peer);
  q.gs->PostOwned(std::move(msg), Verb::kSend, fabric_.now());
  Pump(q, fabric_.now());
}

// ---------------------------------------------------------------------------
// Event plumbing

void SimNic::SendNow(Qp& q, Packet pkt) {
  pkt.src_node = node_;
  pkt.dst_node = q.remote_node;
  pkt.qp_id = q.remote_qp;
  fabric_.Transmit(std::move(pkt));
}

void SimNic::Pump(Qp& q, SimTime now) {
  if (q.wake_pending) return;
  for (;;) {
    if (now < q.next_tx_at) {
      if (!q.wake_pending) {
        q.wake_pending = true;
        fabric_.ScheduleWake(node_, q.id, q.next_tx_at);
      }
      return;
    }
    std::optional<Packet> pkt;
    if (q.kind == TransportKind::kXp) {
      if (!q.xs->HasPendingPacket(now)) return;
      pkt = q.xs->NextPacket(now);
    } else {
      if (!q.gs->CanSend()) return;
      pkt = q.gs->NextPacket(now);
    }
    q.next_tx_at = now + SerializationDelay(pkt->payload_len, std::min(q.cc->rate(), q.line_rate));
    SendNow(q, std::move(*pkt));
    if (q.kind == TransportKind::kXp) {
      DrainXp(q, now);
    } else if (!q.rto_timer) {
      ArmRto(q, now);
    }
  }
}

void SimNic::Emit(Qp& q, CqSide side, const Completion& c, SimTime now) {
  Emit(q, side, side == CqSide::kSender ? q.send_verbs : q.recv_verbs, c, now);
}

void SimNic::Emit(Qp& q, CqSide side, std::unordered_map<std::uint32_t, Verb>& verbs, const Completion& c,
                  SimTime now) {
  Verb verb = side == CqSide::kSender ? Verb::kSend : Verb::kRecv;
  if (auto it = verbs.find(c.wqe_seq); it != verbs.end()) {
    verb = it->second;
    verbs.erase(it);
  }
  CqEntry e{q.id, side, verb, c};
  if (on_completion_) {
    on_completion_(e, now);
  } else {
    cq_.push_back(e);
  }
}

void SimNic::DrainXp(Qp& q, SimTime now) {
  for (const Completion& c : q.xs->PollCq()) {
    if (auto it = q.sender_timers.find(c.wqe_seq); it != q.sender_timers.end()) {
      fabric_.Cancel(it->second);
      q.sender_timers.erase(it);
    }
    Emit(q, CqSide::kSender, c, now);
  }
  for (const Completion& c : q.recv.rx->PollCq()) Emit(q, CqSide::kReceiver, q.recv.verbs, c, now);
  for (const Completion& c : q.read.rx->PollCq()) Emit(q, CqSide::kReceiver, q.read.verbs, c, now);
  SyncRecvTimer(q, q.recv, kTagXpReceiver);
  SyncRecvTimer(q, q.read, kTagXpRead);
}

void SimNic::DrainGbn(Qp& q, SimTime now) {
  if (q.control) {
    q.gs->PollCq();
    q.gr->PollCq();
    for (DeliveredMessage& m : q.gr->PollDelivered()) {
      if (on_control_) on_control_(q.remote_node, std::move(m.bytes), now);
    }
    return;
  }
  for (const Completion& c : q.gs->PollCq()) Emit(q, CqSide::kSender, c, now);
  for (const Completion& c : q.gr->PollCq()) Emit(q, CqSide::kReceiver, c, now);
}

void SimNic::SyncRecvTimer(Qp& q, RecvSide& side, std::uint32_t tag) {
  const std::optional<SimTime> d = side.rx->armed_deadline();
  const std::uint32_t seq = side.rx->context().expected_wqe_seq;
  if (side.timer && (!d || side.timer_seq != seq || side.timer_deadline != *d)) {
    fabric_.Cancel(*side.timer);
    side.timer.reset();
  }
  if (d && !side.timer) {
    side.timer = fabric_.ScheduleTimer(TimerEvent{node_, q.id, seq, tag}, *d);
    side.timer_seq = seq;
    side.timer_deadline = *d;
    if (cfg_.record_timers) {
      auto it = side.verbs.find(seq);
      const Verb verb = it != side.verbs.end() ? it->second : Verb::kRecv;
      timers_log_.push_back(ArmedTimer{q.id, CqSide::kReceiver, verb, seq, *d});
    }
  }
}

void SimNic::ArmRto(Qp& q, SimTime now) {
  CancelRto(q);
  ++q.rto_gen;
  q.rto_timer = fabric_.ScheduleTimer(TimerEvent{node_, q.id, q.rto_gen, kTagRto},
                                      now + q.gs->options().rto);
}

void SimNic::CancelRto(Qp& q) {
  if (q.rto_timer) {
    fabric_.Cancel(*q.rto_timer);
    q.rto_timer.reset();
  }
}

void SimNic::OnPacket(Packet&& pkt, SimTime now) {
  Qp* q = nullptr;
  if (pkt.qp_id >= kControlQpBase) {
    q = &ControlQp(pkt.src_node);
  } else {
    auto it = qps_.find(pkt.qp_id);
    if (it == qps_.end()) return;
    q = it->second.get();
  }
  if (q->kind == TransportKind::kXp) {
    OnXpPacket(*q, std::move(pkt), now);
  } else {
    OnGbnPacket(*q, std::move(pkt), now);
  }
}

void SimNic::OnXpPacket(Qp& q, Packet&& pkt, SimTime now) {
  switch (pkt.kind) {
    case PacketKind::kData: {
      XpReceiver& rx = pkt.verb == Verb::kRead ? *q.read.rx : *q.recv.rx;
      const PlacementAction a = rx.OnPacket(pkt, now);
      const bool placed = a == PlacementAction::kPlaced || a == PlacementAction::kPreemptedThenPlaced;
      // The receive CQE reports the verb that consumed the WQE.
      if (placed && pkt.verb == Verb::kWriteWithImm) q.recv.verbs[pkt.wqe_seq] = Verb::kWriteWithImm;
      if (placed && cfg_.xp_feedback) {
        if (auto fb = q.fb->OnDataReceived(pkt)) SendNow(q, std::move(*fb));
      }
      DrainXp(q, now);
      return;
    }
    case PacketKind::kAck:
    case PacketKind::kCnp:
      q.cc->OnFeedback(pkt, now);
      return;
    case PacketKind::kControl: {
      if (pkt.verb != Verb::kRead || pkt.payload.size() != 8) return;
      std::uint64_t len = 0;
      for (std::size_t i = 0; i < 8; ++i) {
        len |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(pkt.payload[i])) << (8 * i);
      }
      if (len == 0 || pkt.placement_offset > q.region.size() ||
          len > q.region.size() - pkt.placement_offset) {
        return;
      }
      q.xs->QueueReadResponse(pkt.wqe_seq, q.region.subspan(pkt.placement_offset, len),
                              pkt.deadline_hint);
      Pump(q, now);
      return;
    }
  }
}

void SimNic::OnGbnPacket(Qp& q, Packet&& pkt, SimTime now) {
  if (pkt.kind == PacketKind::kData) {
    if (auto reply = q.gr->OnData(pkt, now)) SendNow(q, std::move(*reply));
    DrainGbn(q, now);
    return;
  }
  if (pkt.kind != PacketKind::kAck) return;
  if (pkt.stride_index == 1) {
    q.gs->OnNak(pkt.placement_offset, now);
    CancelRto(q);
  } else if (q.gs->OnAck(pkt.placement_offset, now)) {
    CancelRto(q);
  }
  if (!q.rto_timer && q.gs->outstanding()) ArmRto(q, now);
  DrainGbn(q, now);
  Pump(q, now);
}

void SimNic::OnTimer(const TimerEvent& t, SimTime now) {
  auto it = qps_.find(t.qp);
  if (it == qps_.end()) return;
  Qp& q = *it->second;
  switch (t.tag) {
    case kTagXpSender:
      q.sender_timers.erase(t.wqe_seq);
      q.xs->OnTimer(t.wqe_seq, now);
      DrainXp(q, now);
      return;
    case kTagXpReceiver:
    case kTagXpRead: {
      RecvSide& side = t.tag == kTagXpRead ? q.read : q.recv;
      if (!side.timer || side.timer_seq != t.wqe_seq) return;
      side.timer.reset();
      side.rx->OnTimer(t.wqe_seq, now);
      DrainXp(q, now);
      return;
    }
    case kTagRto:
      if (!q.rto_timer || t.wqe_seq != q.rto_gen) return;
      q.rto_timer.reset();
      q.gs->OnTimeout(now);
      if (q.gs->outstanding()) ArmRto(q, now);
      Pump(q, now);
      return;
    default:
      return;
  }
}

void SimNic::OnWake(std::uint64_t tag, SimTime now) {
  auto it = qps_.find(static_cast<QpId>(tag));
  if (it == qps_.end()) return;
  Qp& q = *it->second;
  q.wake_pending = false;
  Pump(q, now);
}

}  // namespace xpnet
