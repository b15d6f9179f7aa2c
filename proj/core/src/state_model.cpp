#include "xpnet/state_model.hpp"

#include <sstream>

namespace xpnet {

QpStateProfile XpProfile() {
  QpStateProfile p;
  p.name = "XP";
  for (const StateField& f : kXpQpContextFields) p.fields.push_back(StateItem{f.name, f.bytes});
  for (const StateItem& f : p.fields) p.bytes_per_qp += f.bytes;
  p.qps_per_peer = 2;
  p.published_max_qps = 80000;
  p.published_cluster = 40000;
  return p;
}

std::vector<QpStateProfile> ScalabilityProfiles() {
  std::vector<QpStateProfile> out = {
      {"RoCE", 407, {}, 2, 10000, 5000},  {"IRN", 596, {}, 2, 8000, 4000},
      {"SRNIC", 242, {}, 2, 20000, 10000}, {"Falcon", 350, {}, 2, 12000, 6000},
      {"UCCL", 407, {}, 256, 10000, 256},
  };
  out.push_back(XpProfile());
  return out;
}

std::uint64_t MaxQps(const QpStateProfile& profile, std::uint64_t sram_budget) {
  if (profile.bytes_per_qp == 0) throw InvalidArgument("profile has zero bytes per QP");
  return sram_budget / profile.bytes_per_qp;
}

std::uint64_t ClusterSize(std::uint64_t max_qps, std::uint32_t qps_per_peer) {
  if (qps_per_peer == 0) throw InvalidArgument("qps_per_peer must be >= 1");
  return max_qps / qps_per_peer;
}

std::uint64_t FloorThousands(std::uint64_t v) { return v / 1000 * 1000; }

std::string FormatCount(std::uint64_t v) {
  if (v >= 1000 && v % 1000 == 0) return std::to_string(v / 1000) + "K";
  return std::to_string(v);
}

std::vector<ScalabilityRow> ComputeScalability(std::uint64_t sram_budget) {
  std::vector<ScalabilityRow> rows;
  for (const QpStateProfile& p : ScalabilityProfiles()) {
    ScalabilityRow r;
    r.transport = p.name;
    r.bytes_per_qp = p.bytes_per_qp;
    r.max_qps = MaxQps(p, sram_budget);
    r.max_qps_reported = FloorThousands(r.max_qps);
    r.qps_per_peer = p.qps_per_peer;
    r.cluster_size = ClusterSize(r.max_qps_reported, p.qps_per_peer);
    r.cluster_reported = r.cluster_size >= 1000 ? FloorThousands(r.cluster_size) : r.cluster_size;
    r.published_max_qps = p.published_max_qps;
    r.published_cluster = p.published_cluster;
    rows.push_back(r);
  }
  return rows;
}

std::string ScalabilityCsv(const std::vector<ScalabilityRow>& rows) {
  std::ostringstream os;
  os << "transport,bytes_per_qp,max_qps,max_qps_reported,qps_per_peer,cluster_size,"
        "cluster_reported,published_max_qps,published_cluster\n";
  for (const ScalabilityRow& r : rows) {
    os << r.transport << ',' << r.bytes_per_qp << ',' << r.max_qps << ','
       << FormatCount(r.max_qps_reported) << ',' << r.qps_per_peer << ',' << r.cluster_size << ','
       << FormatCount(r.cluster_reported) << ',' << FormatCount(r.published_max_qps) << ','
       << FormatCount(r.published_cluster) << '\n';
  }
  return os.str();
}

}  // namespace xpnet
