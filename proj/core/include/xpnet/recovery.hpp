#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xpnet/types.hpp"

namespace xpnet {

constexpr bool IsPowerOfTwo(std::uint64_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Normalized fast Walsh-Hadamard transform (1/sqrt(p) scaling), so it is its
// own inverse and preserves the L2 norm. Throws InvalidArgument unless the
// length is a power of two.
void FwhtInPlace(std::span<float> block);
std::vector<float> Fwht(std::span<const float> block);

struct EncodedTensor {
  std::vector<float> values;  // num_blocks * block_size coefficients
  std::uint32_t block_size = 0;
  std::uint64_t num_blocks = 0;
  std::uint64_t original_len = 0;
  // False for the RAW layout: values are the padded input itself.
  bool transformed = true;
};

// Zero-pads to a multiple of p and transforms each block independently.
EncodedTensor Encode(std::span<const float> tensor, std::uint32_t p);
EncodedTensor Encode(std::vector<float>&& tensor, std::uint32_t p);
// Same padding, no transform.
EncodedTensor PadRaw(std::span<const float> tensor, std::uint32_t p);
EncodedTensor PadRaw(std::vector<float>&& tensor, std::uint32_t p);
// Inverse transform per block (if transformed), truncated to original_len.
std::vector<float> Decode(const EncodedTensor& enc);
std::vector<float> Decode(EncodedTensor&& enc);

// Appends zero blocks until num_blocks is a multiple of S.
void PadBlocksToStride(EncodedTensor& enc, std::uint32_t stride);

// Coefficient indices carried by each packet. Blocks are grouped S at a
// time; packet j of group g carries coefficients [j*p/S, (j+1)*p/S) of
// every block g*S + k, k in [0, S), block by block. Requires S | p and
// S | num_blocks.
std::vector<std::vector<std::uint64_t>> StrideLayout(const EncodedTensor& enc, std::uint32_t stride);

std::uint64_t PacketCount(const EncodedTensor& enc, std::uint32_t stride);

// Zeroes every coefficient carried by the lost packets, in place.
void ZeroLostPackets(EncodedTensor& enc, std::uint32_t stride, std::span<const std::uint64_t> lost);
// Rebuilds a tensor from packet payloads (element values in layout order).
// Lost packets leave zeros.
EncodedTensor PlaceWithLoss(const EncodedTensor& shape, std::uint32_t stride,
                            const std::vector<std::vector<float>>& payloads,
                            std::span<const std::uint64_t> lost);
// Payloads of every packet under the layout.
std::vector<std::vector<float>> PacketPayloads(const EncodedTensor& enc, std::uint32_t stride);

// Mean squared difference, accumulated in double. Throws on length
// mismatch.
double Mse(std::span<const float> a, std::span<const float> b);

}  // namespace xpnet
