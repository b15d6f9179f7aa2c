#include "xpnet/timeout_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xpnet {

namespace {

SimTime RoundNs(double ns) { return SimTime{static_cast<std::uint64_t>(std::llround(std::max(ns, 0.0)))}; }

}  // namespace

void TimeoutParams::Validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must be in (0, 1]");
  if (!(gamma >= 0.0)) throw InvalidArgument("gamma must be >= 0");
  if (history_cap == 0) throw InvalidArgument("history_cap must be >= 1");
}

double MedianNs(std::span<const SimTime> proposals) {
  if (proposals.empty()) throw InvalidArgument("median of no proposals");
  std::vector<std::uint64_t> v;
  v.reserve(proposals.size());
  for (SimTime t : proposals) v.push_back(t.ns);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return static_cast<double>(v[n / 2]);
  return (static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2])) / 2.0;
}

SimTime AggregateTimeout(std::span<const SimTime> proposals, SimTime t_old, double alpha) {
  if (proposals.empty()) return t_old;
  return RoundNs(alpha * MedianNs(proposals) + (1.0 - alpha) * static_cast<double>(t_old.ns));
}

SimTime InitialTimeout(SimTime t_warmup, double gamma, SimTime delta) {
  if (t_warmup.ns == 0) throw InvalidArgument("warmup duration must be > 0");
  return RoundNs((1.0 + gamma) * static_cast<double>(t_warmup.ns)) + delta;
}

std::vector<SimTime> SplitBudget(SimTime total, std::span<const Phase> phases) {
  if (phases.empty()) throw InvalidArgument("phase list is empty");
  if (total.ns == 0) throw InvalidArgument("budget must be > 0");
  long double sum = 0;
  for (const Phase& p : phases) {
    if (!(p.weight > 0.0)) throw InvalidArgument("phase weights must be > 0");
    if (p.ops == 0) throw InvalidArgument("phase must hold at least one operation");
    sum += p.weight;
  }
  std::vector<SimTime> out(phases.size());
  std::vector<long double> frac(phases.size());
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const long double exact = static_cast<long double>(total.ns) * phases[i].weight / sum;
    const auto whole = static_cast<std::uint64_t>(std::floor(exact));
    out[i] = SimTime{whole};
    frac[i] = exact - static_cast<long double>(whole);
    assigned += whole;
  }
  std::vector<std::size_t> order(phases.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < total.ns; ++k, ++assigned) out[order[k % order.size()]].ns += 1;
  return out;
}

TimeoutEstimator::TimeoutEstimator(TimeoutParams params) : params_(params) { params_.Validate(); }

bool TimeoutEstimator::Record(SimTime elapsed, std::uint64_t bytes) {
  if (bytes == 0) return false;
  history_.push_back(CostObservation{elapsed, bytes});
  while (history_.size() > params_.history_cap) history_.pop_front();
  return true;
}

std::optional<double> TimeoutEstimator::per_byte_cost() const {
  if (history_.empty()) return std::nullopt;
  const CostObservation& o = history_.back();
  return static_cast<double>(o.elapsed.ns) / static_cast<double>(o.bytes);
}

std::optional<double> TimeoutEstimator::per_kb_cost_us() const {
  // ns per byte is numerically us per KB (1 KB = 1000 B).
  return per_byte_cost();
}

std::optional<SimTime> TimeoutEstimator::Propose(std::uint64_t message_bytes) const {
  auto c = per_byte_cost();
  if (!c) return std::nullopt;
  return RoundNs(*c * static_cast<double>(message_bytes));
}

void TimeoutEstimator::InitializeFromWarmup(SimTime t_warmup) {
  current_ = InitialTimeout(t_warmup, params_.gamma, params_.delta);
}

SimTime TimeoutEstimator::Aggregate(std::span<const SimTime> proposals) {
  if (proposals.empty()) {
    if (!current_) throw InvalidArgument("estimator has neither a warmup value nor proposals");
    return *current_;
  }
  if (!current_) {
    current_ = RoundNs(MedianNs(proposals));
  } else {
    current_ = AggregateTimeout(proposals, *current_, params_.alpha);
  }
  return *current_;
}

SimTime TimeoutEstimator::current() const {
  if (!current_) throw InvalidArgument("timeout estimator not initialized");
  return *current_;
}

}  // namespace xpnet
