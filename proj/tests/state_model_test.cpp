#include <gtest/gtest.h>

#include "xpnet/state_model.hpp"

namespace xpnet {
namespace {

const ScalabilityRow& Row(const std::vector<ScalabilityRow>& rows, const std::string& name) {
  for (const auto& r : rows) {
    if (r.transport == name) return r;
  }
  throw std::out_of_range(name);
}

TEST(MaxQps, XpAtFourMiB) {
  const auto p = XpProfile();
  EXPECT_EQ(p.bytes_per_qp, 52u);
  EXPECT_EQ(MaxQps(p, kSramBudgetBytes), 80659u);
  EXPECT_EQ(FloorThousands(MaxQps(p, kSramBudgetBytes)), 80000u);
}

TEST(MaxQps, RoceAtFourMiB) {
  QpStateProfile p;
  p.bytes_per_qp = 407;
  EXPECT_EQ(MaxQps(p, kSramBudgetBytes), 10305u);
  EXPECT_EQ(FloorThousands(MaxQps(p, kSramBudgetBytes)), 10000u);
}

TEST(MaxQps, OneBytePerQp) {
  QpStateProfile p;
  p.bytes_per_qp = 1;
  EXPECT_EQ(MaxQps(p, 1024), 1024u);
  p.bytes_per_qp = 0;
  EXPECT_THROW(MaxQps(p, 1024), InvalidArgument);
}

TEST(ClusterSize, Examples) {
  EXPECT_EQ(ClusterSize(80000, 2), 40000u);
  EXPECT_EQ(ClusterSize(10000, 2), 5000u);
  EXPECT_EQ(ClusterSize(10000, 256), 39u);
  EXPECT_THROW(ClusterSize(10, 0), InvalidArgument);
}

TEST(FormatCount, Examples) {
  EXPECT_EQ(FormatCount(80000), "80K");
  EXPECT_EQ(FormatCount(5000), "5K");
  EXPECT_EQ(FormatCount(256), "256");
  EXPECT_EQ(FormatCount(10305), "10305");
  EXPECT_EQ(FormatCount(0), "0");
}

TEST(XpProfile, ItemizationSumsToBytes) {
  const auto p = XpProfile();
  std::uint32_t sum = 0;
  for (const auto& f : p.fields) sum += f.bytes;
  EXPECT_EQ(sum, p.bytes_per_qp);
  EXPECT_LE(sizeof(XpQpContext), kXpStateBytes);
  EXPECT_EQ(p.qps_per_peer, 2u);
}

TEST(Scalability, XpAndRoceRows) {
  const auto rows = ComputeScalability();
  const auto& xp = Row(rows, "XP");
  EXPECT_EQ(xp.max_qps_reported, 80000u);
  EXPECT_EQ(xp.cluster_reported, 40000u);
  const auto& roce = Row(rows, "RoCE");
  EXPECT_EQ(roce.bytes_per_qp, 407u);
  EXPECT_EQ(roce.max_qps_reported, 10000u);
  EXPECT_EQ(roce.cluster_reported, 5000u);
}

TEST(Scalability, PublishedFiguresCarried) {
  const auto rows = ComputeScalability();
  EXPECT_EQ(rows.size(), 6u);
  EXPECT_EQ(Row(rows, "UCCL").qps_per_peer, 256u);
  EXPECT_EQ(Row(rows, "UCCL").published_cluster, 256u);
  EXPECT_EQ(Row(rows, "XP").published_max_qps, 80000u);
}

TEST(Scalability, SmallBudgetKeepsPlainCounts) {
  const auto rows = ComputeScalability(1024 * 52);
  const auto& xp = Row(rows, "XP");
  EXPECT_EQ(xp.max_qps, 1024u);
  EXPECT_EQ(xp.max_qps_reported, 1000u);
  EXPECT_EQ(xp.cluster_reported, 500u);
}

TEST(Scalability, CsvLayout) {
  const auto csv = ScalabilityCsv(ComputeScalability());
  EXPECT_EQ(csv.rfind("transport,bytes_per_qp,", 0), 0u);
  EXPECT_NE(csv.find("\nXP,52,80659,80K,2,40000,40K,80K,40K\n"), std::string::npos);
  EXPECT_NE(csv.find("\nRoCE,407,10305,10K,2,5000,5K,10K,5K\n"), std::string::npos);
}

}  // namespace
}  // namespace xpnet
