#include "xpnet/fabric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xpnet {

void LinkModel::Validate() const {
  if (!(bandwidth_bps > 0.0)) throw InvalidArgument("link bandwidth must be > 0");
  if (!(loss_rate >= 0.0 && loss_rate < 1.0)) {
    throw InvalidArgument("link loss_rate must be in [0, 1)");
  }
  if (!(reorder_prob >= 0.0 && reorder_prob <= 1.0)) {
    throw InvalidArgument("link reorder_prob must be in [0, 1]");
  }
  if (burst_loss) {
    if (!(burst_loss->burst_prob >= 0.0 && burst_loss->burst_prob < 1.0)) {
      throw InvalidArgument("burst_prob must be in [0, 1)");
    }
    if (burst_loss->burst_len == 0) throw InvalidArgument("burst_len must be >= 1");
  }
}

SimTime SerializationDelay(std::uint32_t payload_len, double bandwidth_bps) {
  const double ns = static_cast<double>(payload_len) * 8.0 * 1e9 / bandwidth_bps;
  return SimTime{static_cast<std::uint64_t>(std::llround(ns))};
}

std::optional<SimTime> SampleTransmit(const LinkModel& link, LinkState& state, Packet& pkt,
                                      SimTime now, Rng& rng) {
  const SimTime departure = std::max(now, state.tx_free_at);
  if (departure - now > link.ecn_threshold) pkt.ecn = true;
  const SimTime ser = SerializationDelay(pkt.payload_len, link.bandwidth_bps);
  state.tx_free_at = departure + ser;

  bool drop = false;
  if (state.burst_remaining > 0) {
    --state.burst_remaining;
    drop = true;
  } else if (link.burst_loss && rng.Bernoulli(link.burst_loss->burst_prob)) {
    state.burst_remaining = link.burst_loss->burst_len - 1;
    drop = true;
  } else {
    drop = rng.Bernoulli(link.loss_rate);
  }
  if (drop) return std::nullopt;

  SimTime at = departure + ser + link.base_delay;
  if (link.jitter.ns > 0) at += SimTime{rng.UpTo(link.jitter.ns)};
  if (link.preserve_order) {
    at = std::max(at, state.last_arrival);
    state.last_arrival = at;
  }
  if (link.reorder_prob > 0.0 && rng.Bernoulli(link.reorder_prob)) at += ser * 2 + Nanos(1);
  return at;
}

FabricStats FabricStats::operator-(const FabricStats& o) const {
  return FabricStats{delivered - o.delivered,   dropped - o.dropped,
                     reordered - o.reordered,   ecn_marked - o.ecn_marked,
                     timers - o.timers,         wakes - o.wakes,
                     dropped_data_bytes - o.dropped_data_bytes};
}

namespace {

struct Later {
  template <typename K>
  bool operator()(const K& a, const K& b) const {
    return a.at != b.at ? a.at > b.at : a.seq > b.seq;
  }
};

}  // namespace

EventId EventQueue::Push(SimTime at, EventPayload payload) {
  std::uint32_t slot = 0;
  if (free_.empty()) {
    slot = static_cast<std::uint32_t>(slots_.size());
    slots_.emplace_back();
  } else {
    slot = free_.back();
    free_.pop_back();
  }
  Slot& s = slots_[slot];
  s.payload = std::move(payload);
  s.live = true;
  ++s.generation;
  heap_.push_back(Key{at, next_seq_++, slot});
  std::push_heap(heap_.begin(), heap_.end(), Later{});
  ++pending_;
  return (static_cast<EventId>(slot) << 32) | s.generation;
}

void EventQueue::Cancel(EventId handle) {
  const auto slot = static_cast<std::uint32_t>(handle >> 32);
  if (slot >= slots_.size()) return;
  Slot& s = slots_[slot];
  if (!s.live || s.generation != static_cast<std::uint32_t>(handle)) return;
  s.live = false;
  s.payload = WakeEvent{};
  --pending_;
}

void EventQueue::Release(std::uint32_t slot) { free_.push_back(slot); }

void EventQueue::SkipCancelled() {
  while (!heap_.empty() && !slots_[heap_.front().slot].live) {
    std::pop_heap(heap_.begin(), heap_.end(), Later{});
    Release(heap_.back().slot);
    heap_.pop_back();
  }
}

bool EventQueue::empty() {
  SkipCancelled();
  return heap_.empty();
}

SimTime EventQueue::next_time() {
  SkipCancelled();
  return heap_.front().at;
}

Event EventQueue::Pop() {
  SkipCancelled();
  std::pop_heap(heap_.begin(), heap_.end(), Later{});
  const Key k = heap_.back();
  heap_.pop_back();
  Slot& s = slots_[k.slot];
  Event ev{k.at, k.seq, std::move(s.payload)};
  s.live = false;
  --pending_;
  Release(k.slot);
  return ev;
}

Fabric::Fabric(std::size_t num_nodes, const LinkModel& default_link, std::uint64_t seed)
    : endpoints_(num_nodes, nullptr),
      links_(num_nodes * num_nodes, default_link),
      link_state_(num_nodes * num_nodes),
      rng_(seed) {
  default_link.Validate();
}

std::size_t Fabric::LinkIndex(NodeId src, NodeId dst) const {
  if (src >= endpoints_.size() || dst >= endpoints_.size()) {
    throw InvalidArgument("node id out of range");
  }
  return static_cast<std::size_t>(src) * endpoints_.size() + dst;
}

void Fabric::Attach(NodeId node, Endpoint* endpoint) {
  if (node >= endpoints_.size()) throw InvalidArgument("node id out of range");
  endpoints_[node] = endpoint;
}

void Fabric::SetLink(NodeId src, NodeId dst, const LinkModel& model) {
  model.Validate();
  links_[LinkIndex(src, dst)] = model;
}

const LinkModel& Fabric::link(NodeId src, NodeId dst) const { return links_[LinkIndex(src, dst)]; }

void Fabric::Transmit(Packet pkt) {
  const std::size_t li = LinkIndex(pkt.src_node, pkt.dst_node);
  LinkState& state = link_state_[li];
  const std::uint64_t link_seq = state.next_tx_seq++;
  const bool forced = drop_hook_ && drop_hook_(pkt);
  std::optional<SimTime> at;
  if (forced) {
    // Still occupies the wire.
    const SimTime departure = std::max(now_, state.tx_free_at);
    state.tx_free_at = departure + SerializationDelay(pkt.payload_len, links_[li].bandwidth_bps);
  } else {
    at = SampleTransmit(links_[li], state, pkt, now_, rng_);
  }
  if (!at) {
    ++stats_.dropped;
    if (pkt.kind == PacketKind::kData) stats_.dropped_data_bytes += pkt.payload_len;
    drop_log_.push_back(DropRecord{now_, pkt.src_node, pkt.dst_node, pkt.qp_id, pkt.kind,
                                   pkt.wqe_seq, pkt.payload_len});
    return;
  }
  if (pkt.ecn) ++stats_.ecn_marked;
  queue_.Push(*at, DeliverEvent{std::move(pkt), link_seq});
}

EventId Fabric::ScheduleTimer(const TimerEvent& timer, SimTime at) {
  return queue_.Push(std::max(at, now_), timer);
}

EventId Fabric::ScheduleWake(NodeId node, std::uint64_t tag, SimTime at) {
  return queue_.Push(std::max(at, now_), WakeEvent{node, tag});
}

void Fabric::Cancel(EventId id) { queue_.Cancel(id); }

EventId Fabric::InjectDelivery(Packet pkt, SimTime at) {
  const std::size_t li = LinkIndex(pkt.src_node, pkt.dst_node);
  const std::uint64_t link_seq = link_state_[li].next_tx_seq++;
  return queue_.Push(std::max(at, now_), DeliverEvent{std::move(pkt), link_seq});
}

void Fabric::Mix(std::uint64_t v) {
  digest_ = (digest_ ^ v) * 0x9e3779b97f4a7c15ull;
  digest_ ^= digest_ >> 29;
}

void Fabric::Dispatch(Event&& ev) {
  if (ev.at < now_) throw std::logic_error("event dispatched out of timestamp order");
  now_ = ev.at;
  Mix(ev.at.ns);
  Mix(ev.id);
  if (auto* d = std::get_if<DeliverEvent>(&ev.payload)) {
    Packet& pkt = d->packet;
    Mix(static_cast<std::uint64_t>(pkt.kind) | (static_cast<std::uint64_t>(pkt.dst_node) << 8) |
        (static_cast<std::uint64_t>(pkt.qp_id) << 32));
    Mix(pkt.wqe_seq);
    Mix(pkt.placement_offset);
    Mix(pkt.payload_len);
    ++stats_.delivered;
    LinkState& state = link_state_[LinkIndex(pkt.src_node, pkt.dst_node)];
    if (state.any_delivered && d->link_seq < state.max_delivered_seq) {
      ++stats_.reordered;
    } else {
      state.max_delivered_seq = d->link_seq;
      state.any_delivered = true;
    }
    if (Endpoint* ep = endpoints_[pkt.dst_node]) ep->OnPacket(std::move(pkt), now_);
  } else if (auto* t = std::get_if<TimerEvent>(&ev.payload)) {
    Mix(0x7100000000000000ull | (static_cast<std::uint64_t>(t->node) << 32) | t->qp);
    Mix(t->wqe_seq);
    ++stats_.timers;
    if (Endpoint* ep = endpoints_[t->node]) ep->OnTimer(*t, now_);
  } else {
    const auto& w = std::get<WakeEvent>(ev.payload);
    Mix(0x5700000000000000ull | w.node);
    Mix(w.tag);
    ++stats_.wakes;
    if (Endpoint* ep = endpoints_[w.node]) ep->OnWake(w.tag, now_);
  }
}

FabricStats Fabric::RunUntil(SimTime stop) {
  const FabricStats before = stats_;
  while (!queue_.empty() && queue_.next_time() <= stop) Dispatch(queue_.Pop());
  if (now_ < stop && stop != SimTime::Max()) now_ = stop;
  return stats_ - before;
}

FabricStats Fabric::RunWhile(const std::function<bool()>& keep_going) {
  const FabricStats before = stats_;
  while (keep_going() && !queue_.empty()) Dispatch(queue_.Pop());
  return stats_ - before;
}

FabricStats Fabric::RunToIdle() {
  const FabricStats before = stats_;
  while (!queue_.empty()) Dispatch(queue_.Pop());
  return stats_ - before;
}

}  // namespace xpnet
