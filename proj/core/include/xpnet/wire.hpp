#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "xpnet/types.hpp"

namespace xpnet {

// Transport header, fixed order, little-endian:
//
//   off size field
//     0    1 kind      (bits 0-3 PacketKind, bits 4-7 Verb)
//     1    4 wqe_seq
//     5    8 placement_offset
//    13    4 payload_len
//    17    2 stride
//    19    2 stride_index
//    21    1 is_last   (0 or 1)
//    22    8 deadline_hint (ns; 0 = absent)
//    30    4 qp_id
//    34      payload (payload_len bytes)
//
// Reliable (Go-Back-N) packets overload two fields: DATA packets carry
// PSN + 1 in deadline_hint (0 stays "absent"), ACK packets carry the
// cumulative next-expected PSN in placement_offset and flag a NAK with
// stride_index = 1.
inline constexpr std::size_t kHeaderBytes = 34;

// Frame size on the wire for a given payload MTU.
constexpr std::size_t FrameBytes(std::uint32_t mtu_payload) { return kHeaderBytes + mtu_payload; }

// Payload capacity of a frame: frame_mtu - kHeaderBytes exactly.
constexpr std::uint32_t PayloadCapacity(std::size_t frame_mtu) {
  return static_cast<std::uint32_t>(frame_mtu - kHeaderBytes);
}

// Serializes header + payload. Throws InvalidArgument if payload.size() does
// not equal payload_len.
std::vector<std::byte> EncodePacket(const Packet& pkt);

// Parses a frame. src/dst come from the network layer. Throws
// InvalidArgument on truncated frames or unknown kind/verb codes.
Packet DecodePacket(std::span<const std::byte> frame, NodeId src = 0, NodeId dst = 0);

}  // namespace xpnet
