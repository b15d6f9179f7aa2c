#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "xpnet/sim_time.hpp"

namespace xpnet {

using NodeId = std::uint32_t;
using QpId = std::uint32_t;

// Payload capacity of one packet in bytes. Frames on the wire carry the fixed
// transport header on top of this (see wire.hpp).
inline constexpr std::uint32_t kDefaultMtu = 4096;

// Tensors are fp32 throughout.
inline constexpr std::uint32_t kElementBytes = sizeof(float);

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a documented capacity limit is hit (e.g. wqe_seq exhaustion).
class LimitError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Verb : std::uint8_t {
  kSend = 0,
  kRecv = 1,
  kWrite = 2,
  kWriteWithImm = 3,
  kRead = 4,
};

std::string_view VerbName(Verb v);

enum class PacketKind : std::uint8_t {
  kData = 0,
  kAck = 1,
  kCnp = 2,
  kControl = 3,
};

// A self-describing transport packet. The transport header fields are the
// ones serialized by wire.hpp; src/dst/ecn belong to the network layer and
// are carried by the fabric alongside the frame.
struct Packet {
  NodeId src_node = 0;
  NodeId dst_node = 0;
  bool ecn = false;

  PacketKind kind = PacketKind::kData;
  Verb verb = Verb::kSend;
  QpId qp_id = 0;
  std::uint32_t wqe_seq = 0;
  std::uint64_t placement_offset = 0;
  std::uint16_t stride = 1;
  std::uint16_t stride_index = 0;
  std::uint32_t payload_len = 0;
  bool is_last = false;
  std::optional<SimTime> deadline_hint;
  std::vector<std::byte> payload;

  // Byte span of the destination buffer touched by this packet. For strided
  // packets this is the whole interleave group.
  std::uint64_t extent_end() const {
    return placement_offset + static_cast<std::uint64_t>(stride) * payload_len;
  }

  bool operator==(const Packet&) const = default;
};

// One contiguous copy performed when placing a (possibly strided) payload.
struct Segment {
  std::uint64_t dst_offset = 0;
  std::uint32_t src_offset = 0;
  std::uint32_t len = 0;
};

// Expands a packet's placement metadata into the destination segments.
// With stride S > 1 the payload holds p elements (p = payload_len / 4):
// p/S elements from each of S consecutive blocks, taken at coefficient
// offset stride_index * p/S inside every block. The group base is
// placement_offset. Throws InvalidArgument on inconsistent metadata.
std::vector<Segment> PlacementSegments(std::uint64_t placement_offset, std::uint16_t stride,
                                       std::uint16_t stride_index, std::uint32_t payload_len);

// Simulator-owned registered memory.
class Buffer {
 public:
  Buffer() = default;
  Buffer(std::size_t len, std::byte fill) : bytes_(len, fill) {}

  std::span<std::byte> span() { return bytes_; }
  std::span<const std::byte> span() const { return bytes_; }
  std::size_t size() const { return bytes_.size(); }
  std::byte* data() { return bytes_.data(); }
  const std::byte* data() const { return bytes_.data(); }

  bool operator==(const Buffer&) const = default;

 private:
  std::vector<std::byte> bytes_;
};

// Allocates a buffer of `len` bytes, every byte equal to `fill`.
Buffer NewBuffer(std::size_t len, std::byte fill);

struct WorkRequest {
  std::uint32_t wqe_seq = 0;  // assigned when posted
  Verb verb = Verb::kSend;
  std::span<std::byte> buffer;
  std::uint64_t remote_offset = 0;
  SimTime timeout = Millis(1);
  std::uint16_t stride = 1;
  std::optional<std::uint64_t> collective_tag;

  // Throws InvalidArgument when timeout or buffer length is zero.
  void Validate() const;
};

enum class CompletionStatus : std::uint8_t {
  kComplete = 0,
  kPartialTimeout = 1,
  kPartialPreempted = 2,
};

std::string_view StatusName(CompletionStatus s);

struct Completion {
  std::uint32_t wqe_seq = 0;
  CompletionStatus status = CompletionStatus::kComplete;
  std::uint64_t received_bytes = 0;
  std::uint64_t message_len = 0;
  SimTime completed_at;

  bool partial() const { return status != CompletionStatus::kComplete; }
  // COMPLETE in last-fragment mode may still report missing bytes.
  bool has_gaps() const { return received_bytes < message_len; }
  std::uint64_t missing_bytes() const {
    return received_bytes < message_len ? message_len - received_bytes : 0;
  }

  bool operator==(const Completion&) const = default;
};

// Receiver-side state of the single active message on a QP.
struct ReceiverMessageContext {
  std::uint32_t expected_wqe_seq = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t message_len = 0;
  SimTime deadline = SimTime::Max();
  bool seen_last = false;
  bool active = false;
  std::uint32_t fragments_placed = 0;
  std::unordered_set<std::uint64_t> placed_fragments;

  void ResetFor(std::uint32_t seq) {
    expected_wqe_seq = seq;
    bytes_received = 0;
    message_len = 0;
    deadline = SimTime::Max();
    seen_last = false;
    active = false;
    fragments_placed = 0;
    placed_fragments.clear();
  }
};

}  // namespace xpnet
