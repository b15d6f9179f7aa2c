#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xpnet/transport_xp.hpp"

namespace xpnet {

struct StateItem {
  std::string name;
  std::uint32_t bytes = 0;
};

struct QpStateProfile {
  std::string name;
  std::uint32_t bytes_per_qp = 0;
  // Only the XP profile is itemized; the others are published totals.
  std::vector<StateItem> fields;
  std::uint32_t qps_per_peer = 2;
  // Published figures, for side-by-side output.
  std::uint64_t published_max_qps = 0;
  std::uint64_t published_cluster = 0;
};

inline constexpr std::uint64_t kSramBudgetBytes = 4ull * 1024 * 1024;
inline constexpr std::uint32_t kXpStateBytes = 52;

static_assert(sizeof(XpQpContext) <= kXpStateBytes,
              "XP per-QP persistent state exceeds the 52-byte profile");

QpStateProfile XpProfile();
// RoCE, IRN, SRNIC, Falcon, UCCL, XP.
std::vector<QpStateProfile> ScalabilityProfiles();

// floor(sram_budget / bytes_per_qp). Throws InvalidArgument on a zero-byte
// profile.
std::uint64_t MaxQps(const QpStateProfile& profile, std::uint64_t sram_budget);
// floor(max_qps / qps_per_peer). Throws InvalidArgument when qps_per_peer is 0.
std::uint64_t ClusterSize(std::uint64_t max_qps, std::uint32_t qps_per_peer);
// Rounds down to whole thousands, as the table reports counts.
std::uint64_t FloorThousands(std::uint64_t v);
// "80K" for multiples of 1000 of at least 1000, the plain number otherwise.
std::string FormatCount(std::uint64_t v);

struct ScalabilityRow {
  std::string transport;
  std::uint32_t bytes_per_qp = 0;
  std::uint64_t max_qps = 0;
  std::uint64_t max_qps_reported = 0;
  std::uint32_t qps_per_peer = 0;
  std::uint64_t cluster_size = 0;
  std::uint64_t cluster_reported = 0;
  std::uint64_t published_max_qps = 0;
  std::uint64_t published_cluster = 0;
};

std::vector<ScalabilityRow> ComputeScalability(std::uint64_t sram_budget = kSramBudgetBytes);
std::string ScalabilityCsv(const std::vector<ScalabilityRow>& rows);

}  // namespace xpnet
