#include "xpnet/collectives.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace xpnet {

std::string_view CollectiveName(CollectiveKind k) {
  switch (k) {
    case CollectiveKind::kAllReduce:
      return "ALLREDUCE";
    case CollectiveKind::kAllGather:
      return "ALLGATHER";
    case CollectiveKind::kReduceScatter:
      return "REDUCESCATTER";
  }
  return "UNKNOWN";
}

std::string_view EncodeName(EncodeMode m) {
  switch (m) {
    case EncodeMode::kRaw:
      return "RAW";
    case EncodeMode::kHdBlk:
      return "HD_BLK";
    case EncodeMode::kHdBlkStr:
      return "HD_BLK_STR";
  }
  return "UNKNOWN";
}

Cluster::Cluster(std::size_t num_nodes, const LinkModel& link, std::uint64_t seed, const NicConfig& nic)
    : fabric_(std::make_unique<Fabric>(num_nodes, link, seed)), nic_config_(nic) {
  nics_.reserve(num_nodes);
  for (std::size_t n = 0; n < num_nodes; ++n) {
    nics_.push_back(std::make_unique<SimNic>(*fabric_, static_cast<NodeId>(n), nic));
  }
}

struct RingCollective::RankState {
  std::vector<float> work;
  std::vector<std::vector<std::byte>> staging;
  std::vector<SimTime> slices;
  std::uint32_t first_recv_seq = 0;
  std::uint32_t next_step = 0;
  std::uint64_t received = 0;
  bool done = false;
};

struct RingCollective::Invocation {
  CollectiveKind kind = CollectiveKind::kAllReduce;
  std::uint32_t steps = 0;
  std::uint64_t chunk = 0;  // elements
  std::uint32_t stride = 1;
  std::vector<RankState> ranks;
  CollectiveResult result;
  std::uint32_t done = 0;
};

RingCollective::RingCollective(Cluster& cluster, std::vector<NodeId> group, CollectiveOptions opts)
    : cluster_(cluster), group_(std::move(group)), opts_(opts) {
  opts_.timeout.Validate();
  const std::size_t n = group_.size();
  if (n < 2) throw ConfigError("collective group needs at least two nodes");
  std::vector<NodeId> sorted = group_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("collective group lists a node twice");
  }
  for (NodeId node : group_) {
    if (node >= cluster_.size()) throw ConfigError("collective group names a node absent from the fabric");
  }
  const std::uint32_t mtu = cluster_.nic_config().mtu_payload;
  if (mtu % kElementBytes != 0 || !IsPowerOfTwo(mtu / kElementBytes)) {
    throw ConfigError("mtu payload must hold a power-of-two number of fp32 elements");
  }
  p_ = mtu / kElementBytes;
  if (opts_.encode.mode == EncodeMode::kHdBlkStr) {
    stride_ = opts_.encode.stride == 0 ? p_ : opts_.encode.stride;
    if (!IsPowerOfTwo(stride_) || p_ % stride_ != 0) {
      throw ConfigError("stride must be a power of two dividing the block size");
    }
  }

  send_qp_.resize(n);
  recv_qp_.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t next = (r + 1) % n;
    auto [a, b] = SimNic::Connect(cluster_.nic(group_[r]), cluster_.nic(group_[next]), opts_.transport);
    send_qp_[r] = a;
    recv_qp_[next] = b;
  }
  last_proposal_.assign(n, std::vector<std::optional<SimTime>>(n));
  for (std::uint32_t r = 0; r < n; ++r) {
    cluster_.nic(group_[r]).SetControlHandler([this, r](NodeId from, std::vector<std::byte>&& msg, SimTime) {
      if (msg.size() != 9) return;
      std::uint64_t ns = 0;
      std::memcpy(&ns, msg.data() + 1, sizeof(ns));
      auto it = std::find(group_.begin(), group_.end(), from);
      if (it == group_.end()) return;
      last_proposal_[r][static_cast<std::size_t>(it - group_.begin())] = SimTime{ns};
    });
  }
}

RingCollective::~RingCollective() = default;

std::uint32_t RingCollective::StrideFor(std::uint64_t tensor_len) const {
  const std::uint64_t per_rank = static_cast<std::uint64_t>(group_.size()) * p_;
  const std::uint64_t blocks = std::max<std::uint64_t>(1, (tensor_len + per_rank - 1) / per_rank);
  std::uint64_t s = std::min<std::uint64_t>(stride_, std::bit_floor(blocks));
  while (s > 1 && ((blocks + s - 1) / s * s - blocks) * 8 > blocks) s /= 2;
  return static_cast<std::uint32_t>(s);
}

std::uint64_t RingCollective::PaddedLength(std::uint64_t tensor_len) const {
  const std::uint64_t unit = static_cast<std::uint64_t>(group_.size()) * p_ * StrideFor(tensor_len);
  return (tensor_len + unit - 1) / unit * unit;
}

const TimeoutEstimator* RingCollective::estimator(CollectiveKind kind, std::uint32_t rank) const {
  auto it = estimators_.find(kind);
  if (it == estimators_.end()) return nullptr;
  return &it->second.at(rank);
}

namespace {

std::uint64_t Mod(std::int64_t v, std::int64_t n) { return static_cast<std::uint64_t>(((v % n) + n) % n); }

struct StepPlan {
  std::uint64_t send_chunk;
  std::uint64_t recv_chunk;
  bool reduce;
};

StepPlan PlanStep(CollectiveKind kind, std::uint32_t rank, std::uint32_t n, std::uint32_t step) {
  const auto i = static_cast<std::int64_t>(rank);
  const auto nn = static_cast<std::int64_t>(n);
  const bool rs_phase = kind == CollectiveKind::kReduceScatter ||
                        (kind == CollectiveKind::kAllReduce && step < n - 1);
  if (rs_phase) {
    const auto s = static_cast<std::int64_t>(step);
    return StepPlan{Mod(i - s - 1, nn), Mod(i - s - 2, nn), true};
  }
  const auto t = static_cast<std::int64_t>(kind == CollectiveKind::kAllReduce ? step - (n - 1) : step);
  return StepPlan{Mod(i - t, nn), Mod(i - t - 1, nn), false};
}

}  // namespace

void RingCollective::PostStepSend(std::uint32_t rank, std::uint32_t step, SimTime /*now*/) {
  RankState& rs = inv_->ranks[rank];
  const StepPlan plan = PlanStep(inv_->kind, rank, static_cast<std::uint32_t>(group_.size()), step);
  const std::uint64_t c = inv_->chunk;
  // The chunk is not written again until the successor has consumed or
  // skipped this message.
  const std::span<float> chunk(rs.work.data() + plan.send_chunk * c, c);
  WorkRequest wr;
  wr.verb = Verb::kSend;
  wr.buffer = std::as_writable_bytes(chunk);
  wr.timeout = rs.slices[step];
  wr.stride = opts_.transport == TransportKind::kXp ? static_cast<std::uint16_t>(inv_->stride) : 1;
  cluster_.nic(group_[rank]).PostSend(send_qp_[rank], wr);
}

void RingCollective::OnCompletion(std::uint32_t rank, const CqEntry& e, SimTime now) {
  if (e.side != CqSide::kReceiver || e.qp != recv_qp_[rank]) return;
  RankState& rs = inv_->ranks[rank];
  const std::uint32_t step = e.completion.wqe_seq - rs.first_recv_seq;
  if (step != rs.next_step || step >= inv_->steps) {
    throw std::logic_error("ring step completed out of order");
  }
  const StepPlan plan = PlanStep(inv_->kind, rank, static_cast<std::uint32_t>(group_.size()), step);
  const std::uint64_t c = inv_->chunk;
  float* dst = rs.work.data() + plan.recv_chunk * c;
  const std::vector<std::byte>& st = rs.staging[step];
  if (plan.reduce) {
    for (std::uint64_t k = 0; k < c; ++k) {
      float v;
      std::memcpy(&v, st.data() + k * kElementBytes, sizeof(v));
      dst[k] += v;
    }
  } else {
    std::memcpy(dst, st.data(), c * kElementBytes);
  }

  CollectiveResult& res = inv_->result;
  const Completion& cq = e.completion;
  res.steps.push_back(StepRecord{rank, step, cq.status, cq.received_bytes, cq.message_len, now});
  res.missing_bytes += cq.missing_bytes();
  rs.received += cq.received_bytes;
  switch (cq.status) {
    case CompletionStatus::kComplete:
      ++res.complete;
      break;
    case CompletionStatus::kPartialTimeout:
      ++res.timed_out;
      break;
    case CompletionStatus::kPartialPreempted:
      ++res.preempted;
      break;
  }
  ++rs.next_step;
  if (rs.next_step < inv_->steps) {
    PostStepSend(rank, rs.next_step, now);
  } else {
    rs.done = true;
    res.finish[rank] = now;
    ++inv_->done;
  }
}

void RingCollective::Exchange(CollectiveKind kind, const std::vector<SimTime>& proposals, bool warmup) {
  const std::size_t n = group_.size();
  for (std::size_t r = 0; r < n; ++r) last_proposal_[r][r] = proposals[r];
  if (opts_.exchange_proposals) {
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<std::byte> msg(9);
      msg[0] = static_cast<std::byte>(static_cast<std::uint8_t>(kind) | (warmup ? 0x80 : 0));
      std::memcpy(msg.data() + 1, &proposals[r].ns, sizeof(std::uint64_t));
      for (std::size_t q = 0; q < n; ++q) {
        if (q != r) cluster_.nic(group_[r]).SendControl(group_[q], msg);
      }
    }
    cluster_.fabric().RunToIdle();
  }
}

CollectiveResult RingCollective::Run(CollectiveKind kind, const std::vector<std::vector<float>>& inputs) {
  std::vector<std::vector<float>> copy = inputs;
  return Run(kind, std::move(copy));
}

CollectiveResult RingCollective::Run(CollectiveKind kind, std::vector<std::vector<float>>&& inputs) {
  const auto n = static_cast<std::uint32_t>(group_.size());
  if (inputs.size() != n) throw InvalidArgument("one input tensor per rank is required");
  const std::uint64_t len = inputs.front().size();
  if (len == 0) throw InvalidArgument("tensor must not be empty");
  for (const auto& in : inputs) {
    if (in.size() != len) throw InvalidArgument("input tensors differ in length");
  }
  const bool xp = opts_.transport == TransportKind::kXp;
  const bool hd = opts_.encode.mode != EncodeMode::kRaw;
  const bool warmup = xp && estimators_.find(kind) == estimators_.end();
  if (warmup) estimators_.emplace(kind, std::vector<TimeoutEstimator>(n, TimeoutEstimator(opts_.timeout)));

  Fabric& fabric = cluster_.fabric();
  fabric.RunToIdle();
  const std::size_t drop_mark = fabric.drop_log().size();

  // Buffers from the previous invocation are reused to avoid reallocating
  // them for every run.
  std::vector<RankState> recycled;
  if (spare_) recycled = std::move(spare_->ranks);
  inv_ = std::make_unique<Invocation>();
  Invocation& inv = *inv_;
  inv.kind = kind;
  inv.steps = (kind == CollectiveKind::kAllReduce ? 2 : 1) * (n - 1);
  const std::uint64_t padded = PaddedLength(len);
  inv.chunk = padded / n;
  inv.stride = StrideFor(len);
  inv.result.kind = kind;
  inv.result.warmup = warmup;
  inv.result.finish.assign(n, SimTime{});
  inv.result.expected_bytes = static_cast<std::uint64_t>(n) * inv.steps * inv.chunk * kElementBytes;
  inv.ranks = std::move(recycled);
  inv.ranks.resize(n);

  for (std::uint32_t r = 0; r < n; ++r) {
    RankState& rs = inv.ranks[r];
    EncodedTensor enc = hd ? Encode(std::move(inputs[r]), p_) : PadRaw(std::move(inputs[r]), p_);
    rs.work = std::move(enc.values);
    rs.work.resize(padded, 0.0f);
    if (xp && !warmup) {
      const std::vector<Phase> phases(inv.steps, Phase{PhaseKind::kSequential, 1.0, 1});
      rs.slices = SplitBudget(estimators_.at(kind)[r].current(), phases);
    } else {
      rs.slices.assign(inv.steps, opts_.warmup_timeout);
    }
    rs.first_recv_seq = 0;
    rs.next_step = 0;
    rs.received = 0;
    rs.done = false;
    rs.staging.resize(inv.steps);
    for (auto& st : rs.staging) st.assign(inv.chunk * kElementBytes, std::byte{0});
  }
  inv.result.step_timeout = inv.ranks[0].slices[0];
  inv.result.budget = xp && !warmup ? estimators_.at(kind)[0].current() : SimTime{};

  for (std::uint32_t r = 0; r < n; ++r) {
    cluster_.nic(group_[r]).SetCompletionHandler(
        [this, r](const CqEntry& e, SimTime now) { OnCompletion(r, e, now); });
  }
  inv.result.start = fabric.now();
  for (std::uint32_t r = 0; r < n; ++r) {
    RankState& rs = inv.ranks[r];
    for (std::uint32_t s = 0; s < inv.steps; ++s) {
      WorkRequest wr;
      wr.verb = Verb::kRecv;
      wr.buffer = rs.staging[s];
      wr.timeout = rs.slices[s];
      const std::uint32_t seq = cluster_.nic(group_[r]).PostRecv(recv_qp_[r], wr);
      if (s == 0) rs.first_recv_seq = seq;
    }
  }
  for (std::uint32_t r = 0; r < n; ++r) PostStepSend(r, 0, fabric.now());
  fabric.RunToIdle();
  for (std::uint32_t r = 0; r < n; ++r) cluster_.nic(group_[r]).SetCompletionHandler(nullptr);
  if (inv.done != n) throw std::logic_error("collective did not finish every rank");

  CollectiveResult& res = inv.result;
  res.cct = *std::max_element(res.finish.begin(), res.finish.end()) - res.start;
  for (std::size_t i = drop_mark; i < fabric.drop_log().size(); ++i) {
    const DropRecord& d = fabric.drop_log()[i];
    if (d.kind == PacketKind::kData && d.qp < kControlQpBase) res.dropped_bytes += d.payload_len;
  }

  res.outputs.resize(n);
  for (std::uint32_t r = 0; r < n; ++r) {
    EncodedTensor enc;
    enc.block_size = p_;
    enc.transformed = hd;
    if (kind == CollectiveKind::kReduceScatter) {
      const std::uint64_t begin = static_cast<std::uint64_t>(r) * inv.chunk;
      enc.values.assign(inv.ranks[r].work.begin() + static_cast<std::ptrdiff_t>(begin),
                        inv.ranks[r].work.begin() + static_cast<std::ptrdiff_t>(begin + inv.chunk));
      enc.original_len = begin >= len ? 0 : std::min(inv.chunk, len - begin);
    } else {
      enc.values = std::move(inv.ranks[r].work);
      enc.original_len = len;
    }
    enc.num_blocks = enc.values.size() / p_;
    res.outputs[r] = Decode(std::move(enc));
  }

  if (xp) {
    auto& est = estimators_.at(kind);
    const std::uint64_t moved = static_cast<std::uint64_t>(inv.steps) * inv.chunk * kElementBytes;
    std::vector<SimTime> proposals(n);
    for (std::uint32_t r = 0; r < n; ++r) {
      const SimTime elapsed = res.finish[r] - res.start;
      if (warmup) {
        proposals[r] = elapsed;
      } else {
        est[r].Record(elapsed, inv.ranks[r].received);
        proposals[r] = est[r].Propose(moved).value_or(est[r].current());
      }
    }
    Exchange(kind, proposals, warmup);
    for (std::uint32_t r = 0; r < n; ++r) {
      std::vector<SimTime> known;
      for (const auto& v : last_proposal_[r]) {
        if (v) known.push_back(*v);
      }
      if (warmup) {
        est[r].InitializeFromWarmup(SimTime{static_cast<std::uint64_t>(std::llround(MedianNs(known)))});
      } else {
        est[r].Aggregate(known);
      }
    }
    if (warmup) {
      for (auto& row : last_proposal_) std::fill(row.begin(), row.end(), std::nullopt);
    }
  }
  CollectiveResult out = std::move(res);
  spare_ = std::move(inv_);
  return out;
}

SimTime Percentile(std::vector<SimTime> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile of no values");
  if (!(q > 0.0 && q <= 1.0)) throw InvalidArgument("percentile must be in (0, 1]");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

CollectiveStats ComputeStats(std::span<const CollectiveResult> runs) {
  if (runs.empty()) throw InvalidArgument("no runs to summarize");
  CollectiveStats s;
  s.runs = runs.size();
  std::vector<SimTime> ccts;
  long double sum = 0;
  std::uint64_t expected = 0;
  std::uint64_t missing = 0;
  for (const CollectiveResult& r : runs) {
    ccts.push_back(r.cct);
    sum += r.cct.ns;
    expected += r.expected_bytes;
    missing += r.missing_bytes;
  }
  s.cct_mean_ns = static_cast<double>(sum / runs.size());
  s.cct_p99 = Percentile(std::move(ccts), 0.99);
  s.bytes_lost_fraction = expected ? static_cast<double>(missing) / static_cast<double>(expected) : 0.0;
  return s;
}

}  // namespace xpnet
