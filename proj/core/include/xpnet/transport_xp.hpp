#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "xpnet/sim_time.hpp"
#include "xpnet/types.hpp"

namespace xpnet {

// Number of packets a work request is cut into. With stride S > 1 the buffer
// must be a whole number of interleave groups (S * mtu_payload bytes) and
// mtu_payload / 4 must be divisible by S.
std::uint64_t FragmentCount(std::uint64_t len, std::uint16_t stride, std::uint32_t mtu_payload);

// Builds fragment `index` of `data`. Offsets are absolute in the destination
// buffer: base_offset + position. Exactly the final fragment has is_last.
Packet FragmentAt(std::span<const std::byte> data, std::uint64_t base_offset,
                  std::uint16_t stride, std::uint32_t mtu_payload, std::uint64_t index);

// Cuts a work request into its self-describing packets, in order.
std::vector<Packet> Fragment(const WorkRequest& wr, std::uint32_t mtu_payload);

// ---------------------------------------------------------------------------
// Sender

struct XpSenderOptions {
  std::uint32_t mtu_payload = kDefaultMtu;
  // First wqe_seq handed out. Only tests move this.
  std::uint64_t first_wqe_seq = 0;
};

class XpSender {
 public:
  explicit XpSender(XpSenderOptions opts = {});

  // Queues the request and returns its wqe_seq. Throws LimitError after
  // 2^32 - 1; sequence numbers never wrap. SEND and WRITE_WITH_IMM packets
  // carry a separate message sequence that skips WRITEs, since a WRITE
  // consumes no receive WQE; without WRITEs the two are equal.
  std::uint32_t PostSend(WorkRequest wr, SimTime now);

  // Streams `data` back to a READ requester under the requester's wqe_seq.
  // Fragments are no longer emitted once the clock passes `deadline`.
  void QueueReadResponse(std::uint32_t wqe_seq, std::span<const std::byte> data,
                         std::optional<SimTime> deadline);

  // True if a fragment is ready. Discards read responses whose deadline
  // has passed.
  bool HasPendingPacket(SimTime now);

  // Requires HasPendingPacket(now). Emits a COMPLETE CQE when this is the
  // final fragment of a posted WQE; no acknowledgment is awaited.
  Packet NextPacket(SimTime now);

  // Deadline expiry for a posted WQE: untransmitted fragments are discarded
  // and a PARTIAL_TIMEOUT CQE reports the bytes handed to the fabric.
  // No-op (nullopt) once the WQE has completed.
  std::optional<Completion> OnTimer(std::uint32_t wqe_seq, SimTime now);

  std::vector<Completion> PollCq();

  std::uint64_t next_wqe_seq() const { return next_wqe_seq_; }
  std::size_t queued() const { return queue_.size(); }
  std::uint64_t suppressed_fragments() const { return suppressed_; }

 private:
  struct Outgoing {
    std::uint32_t wqe_seq = 0;
    std::uint32_t wire_seq = 0;
    Verb verb = Verb::kSend;
    std::span<const std::byte> data;
    std::uint64_t base_offset = 0;
    std::uint16_t stride = 1;
    std::uint64_t next_fragment = 0;
    std::uint64_t num_fragments = 0;
    std::uint64_t bytes_sent = 0;
    bool tracked = true;  // false for READ responses (no local WQE)
    std::optional<SimTime> deadline;
  };

  XpSenderOptions opts_;
  std::uint64_t next_wqe_seq_;
  std::uint64_t next_wire_seq_;
  std::deque<Outgoing> queue_;
  std::deque<Completion> cq_;
  std::uint64_t suppressed_ = 0;
};

// ---------------------------------------------------------------------------
// Receiver

enum class CompletionMode {
  // COMPLETE once the last fragment is seen and every byte has been placed.
  kStrict,
  // COMPLETE as soon as the last fragment is seen; received_bytes may be
  // short of message_len.
  kLastFragment,
};

enum class DuplicateMode {
  // Placed fragment offsets are remembered; duplicates are ignored.
  kOffsetSet,
  // Only a fragment count is kept (O(1) state). Duplicates inflate
  // received_bytes.
  kCountOnly,
};

struct XpReceiverOptions {
  CompletionMode completion_mode = CompletionMode::kStrict;
  DuplicateMode duplicate_mode = DuplicateMode::kOffsetSet;
};

enum class PlacementAction {
  kPlaced,
  kPreemptedThenPlaced,
  kDroppedLate,
  kDuplicate,
  kMalformed,
  kNoReceiveWqe,
};

std::string_view PlacementActionName(PlacementAction a);

struct XpReceiverCounters {
  std::uint64_t placed = 0;
  std::uint64_t placed_bytes = 0;
  std::uint64_t dropped_late = 0;
  std::uint64_t late_bytes = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t malformed = 0;
  std::uint64_t no_receive_wqe = 0;
  std::uint64_t preemptions = 0;
  std::uint64_t timeouts = 0;
};

// Single-active-message receiver. Packets for the expected wqe_seq are
// placed directly; a newer wqe_seq finalizes the active message
// (PARTIAL_PREEMPTED) first; older ones are dropped without touching memory.
// WRITE packets are placed into the registered region with no sequence
// state and no completion.
//
// Posted receive WQEs (SEND targets, WRITE_WITH_IMM notifications, READ
// requests) are matched to wqe_seq in posting order. A WQE's timer starts
// when it becomes the active message: when it is posted with nothing ahead
// of it, or when its predecessor is finalized.
class XpReceiver {
 public:
  explicit XpReceiver(XpReceiverOptions opts = {});

  std::uint32_t PostRecv(const WorkRequest& wr, SimTime now);
  // Target memory for one-sided WRITE / WRITE_WITH_IMM placement.
  void RegisterRegion(std::span<std::byte> region) { region_ = region; }

  PlacementAction OnPacket(const Packet& pkt, SimTime now);
  std::optional<Completion> OnTimer(std::uint32_t wqe_seq, SimTime now);
  std::vector<Completion> PollCq();

  const ReceiverMessageContext& context() const { return ctx_; }
  // Deadline of the active receive WQE, when one is armed.
  std::optional<SimTime> armed_deadline() const {
    return armed_ ? std::optional<SimTime>(ctx_.deadline) : std::nullopt;
  }
  std::uint32_t next_recv_seq() const { return static_cast<std::uint32_t>(next_recv_seq_); }
  std::size_t posted() const { return posted_.size(); }
  const XpReceiverCounters& counters() const { return counters_; }
  const XpReceiverOptions& options() const { return opts_; }

 private:
  struct PostedRecv {
    std::uint32_t wqe_seq = 0;
    Verb verb = Verb::kRecv;
    std::span<std::byte> buffer;
    SimTime timeout;
    SimTime posted_at;
  };

  bool HasWqeForActive() const {
    return !posted_.empty() && posted_.front().wqe_seq == ctx_.expected_wqe_seq;
  }
  void Activate(SimTime now);
  void Finalize(CompletionStatus status, SimTime now);
  void AdvanceTo(std::uint32_t wqe_seq, SimTime now);
  bool MaybeComplete(SimTime now);
  PlacementAction PlaceWrite(const Packet& pkt);

  XpReceiverOptions opts_;
  ReceiverMessageContext ctx_;
  bool armed_ = false;
  std::deque<PostedRecv> posted_;
  std::uint64_t next_recv_seq_ = 0;
  std::span<std::byte> region_;
  std::deque<Completion> cq_;
  XpReceiverCounters counters_;
};

// ---------------------------------------------------------------------------
// Per-QP NIC context

// The persistent per-QP state an XP NIC keeps, laid out as hardware would
// store it. The placed-offset set is a simulator diagnostic and is not part
// of it (DuplicateMode::kCountOnly needs only the fragment counter).
#pragma pack(push, 1)
struct XpQpContext {
  std::uint32_t next_wqe_seq;
  std::uint32_t expected_wqe_seq;
  std::uint32_t remote_qpn;
  std::uint32_t rkey;
  std::uint64_t active_base;
  std::uint32_t active_len;
  std::uint32_t byte_counter;
  std::uint64_t deadline_ns;
  std::uint32_t cc_rate_mbps;
  std::uint32_t cc_last_feedback_us;
  std::uint8_t flags;  // bit0 active, bit1 seen_last, bits 4-7 verb
  std::uint8_t reserved[3];
};
#pragma pack(pop)

struct StateField {
  const char* name;
  std::uint32_t bytes;
};

inline constexpr StateField kXpQpContextFields[] = {
    {"next_wqe_seq", 4},   {"expected_wqe_seq", 4}, {"remote_qpn", 4},
    {"rkey", 4},           {"active_base", 8},      {"active_len", 4},
    {"byte_counter", 4},   {"deadline", 8},         {"cc_rate", 4},
    {"cc_last_feedback", 4}, {"flags", 1},          {"reserved", 3},
};

constexpr std::uint32_t XpQpContextFieldBytes() {
  std::uint32_t sum = 0;
  for (const auto& f : kXpQpContextFields) sum += f.bytes;
  return sum;
}

static_assert(XpQpContextFieldBytes() == sizeof(XpQpContext),
              "XpQpContext itemization out of sync with its layout");

}  // namespace xpnet
