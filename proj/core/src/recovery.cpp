#include "xpnet/recovery.hpp"

#include <algorithm>
#include <cmath>

namespace xpnet {

void FwhtInPlace(std::span<float> block) {
  const std::size_t n = block.size();
  if (!IsPowerOfTwo(n)) throw InvalidArgument("fwht length must be a power of two");
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        const float a = block[j];
        const float b = block[j + h];
        block[j] = a + b;
        block[j + h] = a - b;
      }
    }
  }
  const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(n)));
  for (float& v : block) v *= scale;
}

std::vector<float> Fwht(std::span<const float> block) {
  std::vector<float> out(block.begin(), block.end());
  FwhtInPlace(out);
  return out;
}

EncodedTensor PadRaw(std::span<const float> tensor, std::uint32_t p) {
  return PadRaw(std::vector<float>(tensor.begin(), tensor.end()), p);
}

EncodedTensor PadRaw(std::vector<float>&& tensor, std::uint32_t p) {
  if (tensor.empty()) throw InvalidArgument("tensor must not be empty");
  if (!IsPowerOfTwo(p)) throw InvalidArgument("block size must be a power of two");
  EncodedTensor enc;
  enc.block_size = p;
  enc.original_len = tensor.size();
  enc.num_blocks = (tensor.size() + p - 1) / p;
  enc.values = std::move(tensor);
  enc.values.resize(enc.num_blocks * p, 0.0f);
  enc.transformed = false;
  return enc;
}

EncodedTensor Encode(std::span<const float> tensor, std::uint32_t p) {
  return Encode(std::vector<float>(tensor.begin(), tensor.end()), p);
}

EncodedTensor Encode(std::vector<float>&& tensor, std::uint32_t p) {
  EncodedTensor enc = PadRaw(std::move(tensor), p);
  for (std::uint64_t b = 0; b < enc.num_blocks; ++b) {
    FwhtInPlace(std::span<float>(enc.values).subspan(b * p, p));
  }
  enc.transformed = true;
  return enc;
}

std::vector<float> Decode(const EncodedTensor& enc) {
  EncodedTensor copy = enc;
  return Decode(std::move(copy));
}

std::vector<float> Decode(EncodedTensor&& enc) {
  std::vector<float> v = std::move(enc.values);
  if (enc.transformed) {
    for (std::uint64_t b = 0; b < enc.num_blocks; ++b) {
      FwhtInPlace(std::span<float>(v).subspan(b * enc.block_size, enc.block_size));
    }
  }
  v.resize(enc.original_len);
  return v;
}

void PadBlocksToStride(EncodedTensor& enc, std::uint32_t stride) {
  if (stride == 0) throw InvalidArgument("stride must be >= 1");
  const std::uint64_t rem = enc.num_blocks % stride;
  if (rem == 0) return;
  enc.num_blocks += stride - rem;
  enc.values.resize(enc.num_blocks * enc.block_size, 0.0f);
}

namespace {

void CheckStride(const EncodedTensor& enc, std::uint32_t stride) {
  if (stride == 0 || enc.block_size % stride != 0) {
    throw InvalidArgument("stride must divide the block size");
  }
  if (enc.num_blocks % stride != 0) {
    throw InvalidArgument("block count must be a multiple of the stride");
  }
}

// Calls f(coefficient index, position in payload) for every element of a
// packet.
template <typename F>
void ForEachElement(const EncodedTensor& enc, std::uint32_t stride, std::uint64_t packet, F&& f) {
  const std::uint64_t p = enc.block_size;
  const std::uint64_t per = p / stride;
  const std::uint64_t group = packet / stride;
  const std::uint64_t j = packet % stride;
  std::uint64_t pos = 0;
  for (std::uint64_t k = 0; k < stride; ++k) {
    const std::uint64_t base = (group * stride + k) * p + j * per;
    for (std::uint64_t e = 0; e < per; ++e) f(base + e, pos++);
  }
}

}  // namespace

std::uint64_t PacketCount(const EncodedTensor& enc, std::uint32_t stride) {
  CheckStride(enc, stride);
  return enc.num_blocks;
}

std::vector<std::vector<std::uint64_t>> StrideLayout(const EncodedTensor& enc, std::uint32_t stride) {
  const std::uint64_t n = PacketCount(enc, stride);
  std::vector<std::vector<std::uint64_t>> out(n);
  for (std::uint64_t q = 0; q < n; ++q) {
    out[q].resize(enc.block_size);
    ForEachElement(enc, stride, q, [&](std::uint64_t idx, std::uint64_t pos) { out[q][pos] = idx; });
  }
  return out;
}

void ZeroLostPackets(EncodedTensor& enc, std::uint32_t stride, std::span<const std::uint64_t> lost) {
  const std::uint64_t n = PacketCount(enc, stride);
  const std::uint64_t per = enc.block_size / stride;
  for (std::uint64_t q : lost) {
    if (q >= n) throw InvalidArgument("lost packet index out of range");
    const std::uint64_t group = q / stride;
    const std::uint64_t j = q % stride;
    for (std::uint64_t k = 0; k < stride; ++k) {
      float* base = enc.values.data() + (group * stride + k) * enc.block_size + j * per;
      std::fill(base, base + per, 0.0f);
    }
  }
}

std::vector<std::vector<float>> PacketPayloads(const EncodedTensor& enc, std::uint32_t stride) {
  const std::uint64_t n = PacketCount(enc, stride);
  std::vector<std::vector<float>> out(n, std::vector<float>(enc.block_size));
  for (std::uint64_t q = 0; q < n; ++q) {
    ForEachElement(enc, stride, q,
                   [&](std::uint64_t idx, std::uint64_t pos) { out[q][pos] = enc.values[idx]; });
  }
  return out;
}

EncodedTensor PlaceWithLoss(const EncodedTensor& shape, std::uint32_t stride,
                            const std::vector<std::vector<float>>& payloads,
                            std::span<const std::uint64_t> lost) {
  const std::uint64_t n = PacketCount(shape, stride);
  if (payloads.size() != n) throw InvalidArgument("payload count does not match the layout");
  EncodedTensor out = shape;
  std::fill(out.values.begin(), out.values.end(), 0.0f);
  std::vector<bool> is_lost(n, false);
  for (std::uint64_t q : lost) {
    if (q >= n) throw InvalidArgument("lost packet index out of range");
    is_lost[q] = true;
  }
  for (std::uint64_t q = 0; q < n; ++q) {
    if (is_lost[q]) continue;
    if (payloads[q].size() != shape.block_size) throw InvalidArgument("payload has the wrong length");
    ForEachElement(out, stride, q,
                   [&](std::uint64_t idx, std::uint64_t pos) { out.values[idx] = payloads[q][pos]; });
  }
  return out;
}

double Mse(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidArgument("mse operands differ in length");
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace xpnet
