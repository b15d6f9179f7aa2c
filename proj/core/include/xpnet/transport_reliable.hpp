#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "xpnet/fabric.hpp"
#include "xpnet/sim_time.hpp"
#include "xpnet/types.hpp"

namespace xpnet {

struct GbnOptions {
  std::uint32_t window = 64;
  SimTime rto = Micros(8);
  bool nak_enabled = true;
  std::uint32_t mtu_payload = kDefaultMtu;

  void Validate() const;
};

// k * (base_delay + jitter / 2) * 2.
SimTime DefaultRto(const LinkModel& link, std::uint32_t k = 4);

struct GbnSenderCounters {
  std::uint64_t transmitted = 0;
  std::uint64_t retransmitted = 0;
  std::uint64_t timeouts = 0;
  std::uint64_t naks = 0;
};

// Sliding-window sender. Packets are numbered by a PSN that runs across
// messages; base <= next <= base + window. Payloads are regenerated from the
// posted buffer on retransmission.
class GbnSender {
 public:
  explicit GbnSender(GbnOptions opts = {});

  // Posts a SEND / WRITE / WRITE_WITH_IMM. The buffer must stay valid until
  // the WQE completes.
  std::uint32_t PostSend(const WorkRequest& wr, SimTime now);
  // Same, but the sender keeps its own copy of the bytes.
  std::uint32_t PostOwned(std::vector<std::byte> bytes, Verb verb, SimTime now);

  bool CanSend() const;
  Packet NextPacket(SimTime now);

  // Cumulative ACK: every PSN below `next_expected` was received. Returns
  // true if the window base advanced.
  bool OnAck(std::uint64_t next_expected, SimTime now);
  // NAK: cumulative ACK, then go back to base.
  void OnNak(std::uint64_t next_expected, SimTime now);
  void OnTimeout(SimTime now);

  std::vector<Completion> PollCq();

  // True while some transmitted packet is unacknowledged.
  bool outstanding() const { return base_ < high_; }
  std::uint64_t base() const { return base_; }
  std::uint64_t next_psn() const { return next_; }
  std::uint64_t total_psns() const { return total_; }
  const GbnSenderCounters& counters() const { return counters_; }
  const GbnOptions& options() const { return opts_; }

 private:
  struct Message {
    std::uint32_t wqe_seq = 0;
    Verb verb = Verb::kSend;
    std::shared_ptr<std::vector<std::byte>> owned;
    std::span<const std::byte> data;
    std::uint64_t base_offset = 0;
    std::uint64_t first_psn = 0;
    std::uint64_t num_fragments = 0;
  };

  std::uint32_t Enqueue(Message m);
  const Message& MessageFor(std::uint64_t psn) const;

  GbnOptions opts_;
  std::deque<Message> msgs_;
  std::uint64_t base_ = 0;
  std::uint64_t next_ = 0;
  std::uint64_t high_ = 0;
  std::uint64_t total_ = 0;
  std::uint64_t next_wqe_seq_ = 0;
  std::deque<Completion> cq_;
  GbnSenderCounters counters_;
};

struct GbnReceiverCounters {
  std::uint64_t accepted = 0;
  std::uint64_t out_of_order = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t naks_sent = 0;
  std::uint64_t no_receive_wqe = 0;
};

// A message reassembled by a receiver running without posted buffers.
struct DeliveredMessage {
  std::uint32_t wqe_seq = 0;
  std::vector<std::byte> bytes;
};

// In-order receiver. Out-of-order packets are dropped; the first one after
// a gap triggers a NAK when enabled.
class GbnReceiver {
 public:
  explicit GbnReceiver(GbnOptions opts = {});

  std::uint32_t PostRecv(const WorkRequest& wr, SimTime now);
  void RegisterRegion(std::span<std::byte> region) { region_ = region; }
  // Messages are reassembled internally instead of needing posted WQEs.
  void SetAutoReceive(bool on) { auto_receive_ = on; }

  // Handles one DATA packet; returns the ACK / NAK to send back (with
  // src/dst already swapped). qp_id of the reply is left to the caller.
  std::optional<Packet> OnData(const Packet& pkt, SimTime now);

  std::vector<Completion> PollCq();
  std::vector<DeliveredMessage> PollDelivered();

  std::uint64_t expected_psn() const { return expected_; }
  // PSNs in the order they were handed to the application.
  const std::vector<std::uint64_t>& delivery_trace() const { return trace_; }
  void set_trace_enabled(bool on) { trace_enabled_ = on; }
  const GbnReceiverCounters& counters() const { return counters_; }

 private:
  struct PostedRecv {
    std::uint32_t wqe_seq = 0;
    std::span<std::byte> buffer;
  };

  GbnOptions opts_;
  std::uint64_t expected_ = 0;
  bool nak_outstanding_ = false;
  std::deque<PostedRecv> posted_;
  std::uint64_t next_recv_seq_ = 0;
  std::span<std::byte> region_;
  bool auto_receive_ = false;
  std::uint64_t msg_bytes_ = 0;
  std::uint64_t msg_extent_ = 0;
  std::vector<std::byte> assembling_;
  std::deque<Completion> cq_;
  std::vector<DeliveredMessage> delivered_;
  std::vector<std::uint64_t> trace_;
  bool trace_enabled_ = true;
  GbnReceiverCounters counters_;
};

// PSN carried by a reliable DATA packet.
std::uint64_t PacketPsn(const Packet& pkt);

}  // namespace xpnet
