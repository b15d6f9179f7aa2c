#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "xpnet/sim_time.hpp"
#include "xpnet/types.hpp"

namespace xpnet {

struct TimeoutParams {
  double alpha = 0.2;
  double gamma = 0.25;
  SimTime delta = Micros(50);
  std::size_t history_cap = 16;

  void Validate() const;
};

// Median of the proposals; mean of the middle two for even counts.
double MedianNs(std::span<const SimTime> proposals);

// alpha * median(proposals) + (1 - alpha) * t_old, rounded to the nearest
// ns. Empty proposals leave t_old unchanged.
SimTime AggregateTimeout(std::span<const SimTime> proposals, SimTime t_old, double alpha);

// (1 + gamma) * t_warmup + delta. Throws InvalidArgument on a zero warmup.
SimTime InitialTimeout(SimTime t_warmup, double gamma, SimTime delta);

enum class PhaseKind { kSequential, kParallel };

struct Phase {
  PhaseKind kind = PhaseKind::kSequential;
  double weight = 1.0;
  // Concurrent operations; they all share the phase's deadline.
  std::uint32_t ops = 1;
};

// Slices `total` across phases in proportion to weight. Every operation in
// a phase gets the phase's whole slice. The slices sum to `total` exactly
// (largest remainder on integer nanoseconds, ties to the earlier phase).
std::vector<SimTime> SplitBudget(SimTime total, std::span<const Phase> phases);

struct CostObservation {
  SimTime elapsed;
  std::uint64_t bytes = 0;
};

// Per (collective, group) timeout state.
class TimeoutEstimator {
 public:
  explicit TimeoutEstimator(TimeoutParams params = {});

  // Returns false (and keeps everything as is) when bytes == 0.
  bool Record(SimTime elapsed, std::uint64_t bytes);
  // Cost of the latest observation in ns per byte.
  std::optional<double> per_byte_cost() const;
  std::optional<double> per_kb_cost_us() const;
  // Local proposal: latest per-byte cost times the next message size.
  std::optional<SimTime> Propose(std::uint64_t message_bytes) const;

  void InitializeFromWarmup(SimTime t_warmup);
  // Folds a round of group proposals into t_current. Before
  // initialization the median itself becomes t_current.
  SimTime Aggregate(std::span<const SimTime> proposals);

  bool initialized() const { return current_.has_value(); }
  // Requires initialized().
  SimTime current() const;
  const std::deque<CostObservation>& history() const { return history_; }
  const TimeoutParams& params() const { return params_; }

 private:
  TimeoutParams params_;
  std::optional<SimTime> current_;
  std::deque<CostObservation> history_;
};

}  // namespace xpnet
