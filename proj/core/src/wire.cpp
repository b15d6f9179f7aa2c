#include "xpnet/wire.hpp"

#include <cstring>

namespace xpnet {
namespace {

template <typename T>
void PutLe(std::vector<std::byte>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::byte>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
}

template <typename T>
T GetLe(std::span<const std::byte> in, std::size_t off) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(in[off + i])) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

std::vector<std::byte> EncodePacket(const Packet& pkt) {
  if (pkt.payload.size() != pkt.payload_len) {
    throw InvalidArgument("payload size does not match payload_len");
  }
  std::vector<std::byte> out;
  out.reserve(kHeaderBytes + pkt.payload.size());
  const auto kind = static_cast<std::uint8_t>(static_cast<std::uint8_t>(pkt.kind) |
                                              (static_cast<std::uint8_t>(pkt.verb) << 4));
  PutLe<std::uint8_t>(out, kind);
  PutLe<std::uint32_t>(out, pkt.wqe_seq);
  PutLe<std::uint64_t>(out, pkt.placement_offset);
  PutLe<std::uint32_t>(out, pkt.payload_len);
  PutLe<std::uint16_t>(out, pkt.stride);
  PutLe<std::uint16_t>(out, pkt.stride_index);
  PutLe<std::uint8_t>(out, pkt.is_last ? 1 : 0);
  PutLe<std::uint64_t>(out, pkt.deadline_hint ? pkt.deadline_hint->ns : 0);
  PutLe<std::uint32_t>(out, pkt.qp_id);
  out.insert(out.end(), pkt.payload.begin(), pkt.payload.end());
  return out;
}

Packet DecodePacket(std::span<const std::byte> frame, NodeId src, NodeId dst) {
  if (frame.size() < kHeaderBytes) throw InvalidArgument("frame shorter than header");
  Packet pkt;
  pkt.src_node = src;
  pkt.dst_node = dst;
  const auto kind = GetLe<std::uint8_t>(frame, 0);
  const std::uint8_t kind_code = kind & 0x0f;
  const std::uint8_t verb_code = kind >> 4;
  if (kind_code > static_cast<std::uint8_t>(PacketKind::kControl)) {
    throw InvalidArgument("unknown packet kind");
  }
  if (verb_code > static_cast<std::uint8_t>(Verb::kRead)) throw InvalidArgument("unknown verb");
  pkt.kind = static_cast<PacketKind>(kind_code);
  pkt.verb = static_cast<Verb>(verb_code);
  pkt.wqe_seq = GetLe<std::uint32_t>(frame, 1);
  pkt.placement_offset = GetLe<std::uint64_t>(frame, 5);
  pkt.payload_len = GetLe<std::uint32_t>(frame, 13);
  pkt.stride = GetLe<std::uint16_t>(frame, 17);
  pkt.stride_index = GetLe<std::uint16_t>(frame, 19);
  const auto last = GetLe<std::uint8_t>(frame, 21);
  if (last > 1) throw InvalidArgument("is_last must be 0 or 1");
  pkt.is_last = last == 1;
  const auto hint = GetLe<std::uint64_t>(frame, 22);
  if (hint != 0) pkt.deadline_hint = SimTime{hint};
  pkt.qp_id = GetLe<std::uint32_t>(frame, 30);
  if (frame.size() != kHeaderBytes + pkt.payload_len) {
    throw InvalidArgument("frame length does not match payload_len");
  }
  pkt.payload.assign(frame.begin() + kHeaderBytes, frame.end());
  return pkt;
}

}  // namespace xpnet
