#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <unordered_set>
#include <variant>
#include <vector>

#include "xpnet/sim_time.hpp"
#include "xpnet/types.hpp"

namespace xpnet {

// Seeded generator with a portable double conversion so that traces are
// reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t Next() { return engine_(); }
  double Uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool Bernoulli(double p) { return p > 0.0 && Uniform01() < p; }
  // Standard normal via Box-Muller (one draw per call).
  double Normal() {
    const double u1 = 1.0 - Uniform01();
    const double u2 = Uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  // Uniform integer in [0, n]; n == 0 returns 0.
  std::uint64_t UpTo(std::uint64_t n) {
    if (n == 0) return 0;
    return static_cast<std::uint64_t>(Uniform01() * static_cast<double>(n + 1)) % (n + 1);
  }

 private:
  std::mt19937_64 engine_;
};

// Two-state burst loss: each packet in the good state starts a burst with
// probability burst_prob; a burst drops the next burst_len packets.
struct BurstLoss {
  double burst_prob = 0.0;
  std::uint32_t burst_len = 1;
};

struct LinkModel {
  double bandwidth_bps = 25e9;
  SimTime base_delay = Micros(1);
  SimTime jitter = Nanos(0);
  double loss_rate = 0.0;
  std::optional<BurstLoss> burst_loss;
  // Probability that a packet is held back past its successor.
  double reorder_prob = 0.0;
  // When set, jitter never lets a packet overtake an earlier one on the same
  // link (queueing-delay variation on a single path). Only reorder_prob
  // reorders then.
  bool preserve_order = false;
  // ECN-mark a packet when the egress backlog ahead of it exceeds this.
  SimTime ecn_threshold = SimTime::Max();

  // Throws InvalidArgument unless 0 <= loss_rate < 1 and bandwidth > 0.
  void Validate() const;
};

// Serialization delay of payload_len bytes, rounded to the nearest ns.
SimTime SerializationDelay(std::uint32_t payload_len, double bandwidth_bps);

// Mutable per-direction link state.
struct LinkState {
  SimTime tx_free_at;
  std::uint32_t burst_remaining = 0;
  SimTime last_arrival;
  std::uint64_t next_tx_seq = 0;
  std::uint64_t max_delivered_seq = 0;
  bool any_delivered = false;
};

// Applies the link model to one packet sent at `now`: serializes it behind
// any backlog, then drops it (nullopt) or returns its delivery time
// departure + serialization + base_delay + uniform(0, jitter). May set
// pkt.ecn.
std::optional<SimTime> SampleTransmit(const LinkModel& link, LinkState& state, Packet& pkt,
                                      SimTime now, Rng& rng);

struct DeliverEvent {
  Packet packet;
  std::uint64_t link_seq = 0;
};

struct TimerEvent {
  NodeId node = 0;
  QpId qp = 0;
  std::uint32_t wqe_seq = 0;
  std::uint32_t tag = 0;
};

struct WakeEvent {
  NodeId node = 0;
  std::uint64_t tag = 0;
};

using EventPayload = std::variant<DeliverEvent, TimerEvent, WakeEvent>;
using EventId = std::uint64_t;

struct Event {
  SimTime at;
  EventId id = 0;
  EventPayload payload;
};

// Min-heap on (at, seq). Sequence numbers are insertion order, so ties are
// broken deterministically. Payloads live in a slot table and the heap holds
// small keys. Push returns a handle for Cancel; cancellation is lazy.
class EventQueue {
 public:
  EventId Push(SimTime at, EventPayload payload);
  // No-op for handles that already fired or were cancelled.
  void Cancel(EventId handle);
  bool empty();
  // Requires !empty().
  SimTime next_time();
  // Event::id is the insertion sequence number.
  Event Pop();
  std::size_t pending() const { return pending_; }

 private:
  struct Key {
    SimTime at;
    std::uint64_t seq = 0;
    std::uint32_t slot = 0;
  };
  struct Slot {
    EventPayload payload;
    std::uint32_t generation = 0;
    bool live = false;
  };
  void SkipCancelled();
  void Release(std::uint32_t slot);

  std::vector<Key> heap_;
  std::vector<Slot> slots_;
  std::vector<std::uint32_t> free_;
  std::uint64_t next_seq_ = 0;
  std::size_t pending_ = 0;
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void OnPacket(Packet&& pkt, SimTime now) = 0;
  virtual void OnTimer(const TimerEvent& timer, SimTime now) = 0;
  virtual void OnWake(std::uint64_t tag, SimTime now) = 0;
};

struct FabricStats {
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t reordered = 0;
  std::uint64_t ecn_marked = 0;
  std::uint64_t timers = 0;
  std::uint64_t wakes = 0;
  std::uint64_t dropped_data_bytes = 0;

  FabricStats operator-(const FabricStats& o) const;
};

struct DropRecord {
  SimTime at;
  NodeId src = 0;
  NodeId dst = 0;
  QpId qp = 0;
  PacketKind kind = PacketKind::kData;
  std::uint32_t wqe_seq = 0;
  std::uint32_t payload_len = 0;
};

// Single-threaded discrete-event simulator for a full mesh of directed links.
class Fabric {
 public:
  Fabric(std::size_t num_nodes, const LinkModel& default_link, std::uint64_t seed);

  Fabric(const Fabric&) = delete;
  Fabric& operator=(const Fabric&) = delete;

  std::size_t num_nodes() const { return endpoints_.size(); }
  void Attach(NodeId node, Endpoint* endpoint);
  void SetLink(NodeId src, NodeId dst, const LinkModel& model);
  const LinkModel& link(NodeId src, NodeId dst) const;

  // Sends pkt from pkt.src_node to pkt.dst_node at now().
  void Transmit(Packet pkt);
  EventId ScheduleTimer(const TimerEvent& timer, SimTime at);
  EventId ScheduleWake(NodeId node, std::uint64_t tag, SimTime at);
  void Cancel(EventId id);

  // Test hook: enqueue a delivery directly, bypassing the link model.
  EventId InjectDelivery(Packet pkt, SimTime at);

  // Forced-drop hook evaluated before the link model; true drops the packet.
  void SetDropHook(std::function<bool(const Packet&)> hook) { drop_hook_ = std::move(hook); }

  // Dispatches every event with at <= stop, in order. Returns the counts
  // accumulated during this call.
  FabricStats RunUntil(SimTime stop);
  // Dispatches until the queue is empty or `done` returns true.
  FabricStats RunWhile(const std::function<bool()>& keep_going);
  FabricStats RunToIdle();

  SimTime now() const { return now_; }
  bool idle() { return queue_.empty(); }
  const FabricStats& stats() const { return stats_; }
  const std::vector<DropRecord>& drop_log() const { return drop_log_; }
  // Running 64-bit hash over every dispatched event.
  std::uint64_t trace_digest() const { return digest_; }
  Rng& rng() { return rng_; }

 private:
  void Dispatch(Event&& ev);
  void Mix(std::uint64_t v);
  std::size_t LinkIndex(NodeId src, NodeId dst) const;

  std::vector<Endpoint*> endpoints_;
  std::vector<LinkModel> links_;
  std::vector<LinkState> link_state_;
  EventQueue queue_;
  Rng rng_;
  SimTime now_;
  FabricStats stats_;
  std::vector<DropRecord> drop_log_;
  std::function<bool(const Packet&)> drop_hook_;
  std::uint64_t digest_ = 1469598103934665603ull;
};

}  // namespace xpnet
