#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xpnet/congestion.hpp"
#include "xpnet/fabric.hpp"
#include "xpnet/transport_reliable.hpp"
#include "xpnet/transport_xp.hpp"

namespace xpnet {

enum class TransportKind { kXp, kGbn };

std::string_view TransportName(TransportKind t);

struct NicConfig {
  std::uint32_t mtu_payload = kDefaultMtu;
  XpReceiverOptions xp;
  // Per-fragment ACK/CNP feedback on XP QPs.
  bool xp_feedback = true;
  GbnOptions gbn;
  // Reliable QP retransmission timeout. Unset: DefaultRto(link, rto_k) of
  // the link toward the peer.
  std::optional<SimTime> gbn_rto;
  std::uint32_t rto_k = 4;
  bool record_gbn_trace = false;
  CongestionConfig congestion;
  bool record_timers = true;
};

enum class CqSide { kSender, kReceiver };

struct CqEntry {
  QpId qp = 0;
  CqSide side = CqSide::kSender;
  Verb verb = Verb::kSend;
  Completion completion;
};

// A timer armed by the NIC on behalf of a WQE.
struct ArmedTimer {
  QpId qp = 0;
  CqSide side = CqSide::kSender;
  Verb verb = Verb::kSend;
  std::uint32_t wqe_seq = 0;
  SimTime deadline;
};

// QP ids from here up are the per-peer reliable control channels
// (kControlQpBase + peer node).
inline constexpr QpId kControlQpBase = 0x80000000u;

// One simulated NIC. Owns the QPs of a node and drives them from fabric
// events: pacing wakes, per-WQE timers, packet arrivals.
class SimNic final : public Endpoint {
 public:
  SimNic(Fabric& fabric, NodeId node, NicConfig cfg = {});
  ~SimNic() override;
  SimNic(const SimNic&) = delete;
  SimNic& operator=(const SimNic&) = delete;

  NodeId node() const { return node_; }
  const NicConfig& config() const { return cfg_; }

  // Creates a connected QP pair; returns {qp on a, qp on b}.
  static std::pair<QpId, QpId> Connect(SimNic& a, SimNic& b, TransportKind kind);

  std::uint32_t PostSend(QpId qp, const WorkRequest& wr);
  std::uint32_t PostRecv(QpId qp, const WorkRequest& wr);
  // Reads wr.buffer.size() bytes at wr.remote_offset of the peer's region
  // into wr.buffer. XP QPs only.
  std::uint32_t PostRead(QpId qp, const WorkRequest& wr);
  void RegisterRegion(QpId qp, std::span<std::byte> region);

  using CompletionHandler = std::function<void(const CqEntry&, SimTime)>;
  // With a handler installed, completions go to it instead of the CQ.
  void SetCompletionHandler(CompletionHandler h) { on_completion_ = std::move(h); }
  std::vector<CqEntry> PollCq();

  // Reliable delivery of a small message (at most one MTU) to `peer`.
  void SendControl(NodeId peer, std::vector<std::byte> msg);
  using ControlHandler = std::function<void(NodeId, std::vector<std::byte>&&, SimTime)>;
  void SetControlHandler(ControlHandler h) { on_control_ = std::move(h); }

  void OnPacket(Packet&& pkt, SimTime now) override;
  void OnTimer(const TimerEvent& timer, SimTime now) override;
  void OnWake(std::uint64_t tag, SimTime now) override;

  TransportKind transport(QpId qp) const;
  const XpSender& xp_sender(QpId qp) const;
  const XpReceiver& xp_receiver(QpId qp) const;
  // Receive queue of READ requests (their own wqe_seq space).
  const XpReceiver& xp_read_receiver(QpId qp) const;
  const GbnSender& gbn_sender(QpId qp) const;
  const GbnReceiver& gbn_receiver(QpId qp) const;
  const RateController& rate_controller(QpId qp) const;
  const std::vector<ArmedTimer>& armed_timers() const { return timers_log_; }

 private:
  struct Qp;
  struct RecvSide;

  Qp& NewQp(TransportKind kind, NodeId remote_node, QpId id);
  Qp& Get(QpId qp);
  const Qp& Get(QpId qp) const;
  Qp& ControlQp(NodeId peer);

  void Pump(Qp& q, SimTime now);
  void SendNow(Qp& q, Packet pkt);
  void Emit(Qp& q, CqSide side, const Completion& c, SimTime now);
  void Emit(Qp& q, CqSide side, std::unordered_map<std::uint32_t, Verb>& verbs, const Completion& c,
            SimTime now);
  void DrainXp(Qp& q, SimTime now);
  void DrainGbn(Qp& q, SimTime now);
  void SyncRecvTimer(Qp& q, RecvSide& side, std::uint32_t tag);
  void ArmRto(Qp& q, SimTime now);
  void CancelRto(Qp& q);
  void OnXpPacket(Qp& q, Packet&& pkt, SimTime now);
  void OnGbnPacket(Qp& q, Packet&& pkt, SimTime now);

  Fabric& fabric_;
  NodeId node_;
  NicConfig cfg_;
  QpId next_qp_id_ = 1;
  std::unordered_map<QpId, std::unique_ptr<Qp>> qps_;
  CompletionHandler on_completion_;
  ControlHandler on_control_;
  std::vector<CqEntry> cq_;
  std::vector<ArmedTimer> timers_log_;
};

}  // namespace xpnet
