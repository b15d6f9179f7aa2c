#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "xpnet/fabric.hpp"
#include "xpnet/nic.hpp"
#include "xpnet/recovery.hpp"
#include "xpnet/timeout_estimator.hpp"

namespace xpnet {

enum class CollectiveKind { kAllReduce, kAllGather, kReduceScatter };
enum class EncodeMode { kRaw, kHdBlk, kHdBlkStr };

std::string_view CollectiveName(CollectiveKind k);
std::string_view EncodeName(EncodeMode m);

struct EncodeConfig {
  EncodeMode mode = EncodeMode::kRaw;
  // Interleave factor for kHdBlkStr; 0 means S = p.
  std::uint32_t stride = 0;
};

// A fabric with one NIC per node.
class Cluster {
 public:
  Cluster(std::size_t num_nodes, const LinkModel& link, std::uint64_t seed, const NicConfig& nic = {});

  Fabric& fabric() { return *fabric_; }
  SimNic& nic(NodeId n) { return *nics_.at(n); }
  std::size_t size() const { return nics_.size(); }
  const NicConfig& nic_config() const { return nic_config_; }

 private:
  std::unique_ptr<Fabric> fabric_;
  std::vector<std::unique_ptr<SimNic>> nics_;
  NicConfig nic_config_;
};

struct CollectiveOptions {
  TransportKind transport = TransportKind::kXp;
  EncodeConfig encode;
  // Per-operation timeout of the warmup invocation.
  SimTime warmup_timeout = Millis(100);
  TimeoutParams timeout;
  // Exchange timeout proposals over the control channel after each XP
  // invocation.
  bool exchange_proposals = true;
};

struct StepRecord {
  std::uint32_t rank = 0;
  std::uint32_t step = 0;
  CompletionStatus status = CompletionStatus::kComplete;
  std::uint64_t received_bytes = 0;
  std::uint64_t message_len = 0;
  SimTime completed_at;
};

struct CollectiveResult {
  CollectiveKind kind = CollectiveKind::kAllReduce;
  bool warmup = false;
  // Per rank (group order). AllReduce and AllGather yield the whole tensor;
  // ReduceScatter yields the rank's own chunk.
  std::vector<std::vector<float>> outputs;
  SimTime start;
  std::vector<SimTime> finish;
  SimTime cct;
  // Total budget and per-step slice used (XP).
  SimTime budget;
  SimTime step_timeout;
  std::vector<StepRecord> steps;
  std::uint64_t expected_bytes = 0;
  std::uint64_t missing_bytes = 0;
  // DATA payload bytes the fabric dropped on the ring QPs during the run.
  std::uint64_t dropped_bytes = 0;
  std::uint32_t complete = 0;
  std::uint32_t timed_out = 0;
  std::uint32_t preempted = 0;

  bool all_complete() const { return timed_out == 0 && preempted == 0; }
};

// Ring collectives over the NICs of `group`, in group order. The first XP
// invocation of each collective kind is a warmup that seeds the timeout
// estimator; later ones use the estimator's canonical timeout.
class RingCollective {
 public:
  RingCollective(Cluster& cluster, std::vector<NodeId> group, CollectiveOptions opts = {});
  ~RingCollective();
  RingCollective(const RingCollective&) = delete;
  RingCollective& operator=(const RingCollective&) = delete;

  // inputs[r] is rank r's tensor; all of the same length.
  CollectiveResult Run(CollectiveKind kind, const std::vector<std::vector<float>>& inputs);
  // Same, consuming the input tensors.
  CollectiveResult Run(CollectiveKind kind, std::vector<std::vector<float>>&& inputs);

  std::size_t ranks() const { return group_.size(); }
  std::uint32_t block_elements() const { return p_; }
  // Configured stride (1 unless the encoding is HD_BLK_STR).
  std::uint32_t stride() const { return stride_; }
  // Stride used on the wire for a tensor of this length. Capped at the
  // blocks per rank chunk, and halved while padding would exceed 1/8 of it.
  std::uint32_t StrideFor(std::uint64_t tensor_len) const;
  // Tensor length after padding each rank chunk to whole stride groups.
  std::uint64_t PaddedLength(std::uint64_t tensor_len) const;
  // Timeout estimator of `rank` for `kind` (nullptr before the first XP run).
  const TimeoutEstimator* estimator(CollectiveKind kind, std::uint32_t rank) const;

 private:
  struct Invocation;
  struct RankState;

  void OnCompletion(std::uint32_t rank, const CqEntry& e, SimTime now);
  void PostStepSend(std::uint32_t rank, std::uint32_t step, SimTime now);
  void Exchange(CollectiveKind kind, const std::vector<SimTime>& proposals, bool warmup);

  Cluster& cluster_;
  std::vector<NodeId> group_;
  CollectiveOptions opts_;
  std::uint32_t p_ = 0;
  std::uint32_t stride_ = 1;
  std::vector<QpId> send_qp_;
  std::vector<QpId> recv_qp_;
  std::map<CollectiveKind, std::vector<TimeoutEstimator>> estimators_;
  // last_proposal_[rank][peer]
  std::vector<std::vector<std::optional<SimTime>>> last_proposal_;
  std::unique_ptr<Invocation> inv_;
  std::unique_ptr<Invocation> spare_;
};

struct CollectiveStats {
  std::size_t runs = 0;
  double cct_mean_ns = 0.0;
  SimTime cct_p99;
  double bytes_lost_fraction = 0.0;
};

// Nearest-rank percentile (q in (0, 1]) of durations.
SimTime Percentile(std::vector<SimTime> values, double q);
CollectiveStats ComputeStats(std::span<const CollectiveResult> runs);

}  // namespace xpnet
