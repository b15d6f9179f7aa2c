#include "xpnet/types.hpp"

namespace xpnet {

std::string_view VerbName(Verb v) {
  switch (v) {
    case Verb::kSend:
      return "SEND";
    case Verb::kRecv:
      return "RECV";
    case Verb::kWrite:
      return "WRITE";
    case Verb::kWriteWithImm:
      return "WRITE_WITH_IMM";
    case Verb::kRead:
      return "READ";
  }
  return "UNKNOWN";
}

std::string_view StatusName(CompletionStatus s) {
  switch (s) {
    case CompletionStatus::kComplete:
      return "COMPLETE";
    case CompletionStatus::kPartialTimeout:
      return "PARTIAL_TIMEOUT";
    case CompletionStatus::kPartialPreempted:
      return "PARTIAL_PREEMPTED";
  }
  return "UNKNOWN";
}

std::vector<Segment> PlacementSegments(std::uint64_t placement_offset, std::uint16_t stride,
                                       std::uint16_t stride_index,
                                       std::uint32_t payload_len) {
  if (stride == 0) throw InvalidArgument("stride must be >= 1");
  if (stride == 1) {
    if (stride_index != 0) throw InvalidArgument("stride_index must be 0 when stride is 1");
    return {Segment{placement_offset, 0, payload_len}};
  }
  if (stride_index >= stride) throw InvalidArgument("stride_index out of range");
  if (payload_len % kElementBytes != 0) {
    throw InvalidArgument("strided payload must hold whole fp32 elements");
  }
  const std::uint32_t block_elems = payload_len / kElementBytes;
  if (block_elems % stride != 0) throw InvalidArgument("stride must divide the block size");
  const std::uint32_t per_block = block_elems / stride;
  std::vector<Segment> segs;
  segs.reserve(stride);
  for (std::uint32_t k = 0; k < stride; ++k) {
    const std::uint64_t elem =
        static_cast<std::uint64_t>(k) * block_elems + static_cast<std::uint64_t>(stride_index) * per_block;
    segs.push_back(Segment{placement_offset + elem * kElementBytes, k * per_block * kElementBytes,
                           per_block * kElementBytes});
  }
  return segs;
}

Buffer NewBuffer(std::size_t len, std::byte fill) {
  if (len == 0) throw InvalidArgument("buffer length must be > 0");
  return Buffer(len, fill);
}

void WorkRequest::Validate() const {
  if (timeout.ns == 0) throw InvalidArgument("work request timeout must be > 0");
  if (buffer.empty()) throw InvalidArgument("work request buffer length must be > 0");
  if (stride == 0) throw InvalidArgument("work request stride must be >= 1");
}

}  // namespace xpnet
