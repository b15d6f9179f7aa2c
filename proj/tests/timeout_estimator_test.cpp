#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "xpnet/fabric.hpp"
#include "xpnet/timeout_estimator.hpp"

namespace xpnet {
namespace {

std::vector<SimTime> Us(std::initializer_list<std::uint64_t> v) {
  std::vector<SimTime> out;
  for (auto x : v) out.push_back(Micros(x));
  return out;
}

TEST(Record, OneMicrosecondPerKilobyte) {
  TimeoutEstimator e;
  EXPECT_TRUE(e.Record(Micros(100), 100000));
  EXPECT_DOUBLE_EQ(*e.per_kb_cost_us(), 1.0);
}

TEST(Record, FiveMicrosecondsPerKilobyte) {
  TimeoutEstimator e;
  EXPECT_TRUE(e.Record(Micros(250), 50000));
  EXPECT_DOUBLE_EQ(*e.per_kb_cost_us(), 5.0);
  EXPECT_EQ(*e.Propose(2000), Micros(10));
}

TEST(Record, ZeroBytesSkipped) {
  TimeoutEstimator e;
  EXPECT_FALSE(e.Record(Micros(100), 0));
  EXPECT_FALSE(e.per_byte_cost().has_value());
  EXPECT_FALSE(e.Propose(100).has_value());
  e.Record(Micros(10), 10);
  EXPECT_FALSE(e.Record(Micros(100), 0));
  EXPECT_DOUBLE_EQ(*e.per_byte_cost(), 1000.0);
}

TEST(Record, LatestObservationWinsAndHistoryCapped) {
  TimeoutEstimator e;
  for (int i = 1; i <= 40; ++i) e.Record(Micros(i), 1000);
  EXPECT_DOUBLE_EQ(*e.per_byte_cost(), 40.0);
  EXPECT_EQ(e.history().size(), 16u);
}

TEST(Aggregate, FormulaExample) {
  EXPECT_EQ(AggregateTimeout(Us({100, 200, 900}), Micros(100), 0.2), Micros(120));
}

TEST(Aggregate, FixedPoint) { EXPECT_EQ(AggregateTimeout(Us({500}), Micros(500), 0.2), Micros(500)); }

TEST(Aggregate, OutlierIgnoredByMedian) {
  EXPECT_DOUBLE_EQ(MedianNs(Us({100, 100, 100, 100, 1000000})), 100000.0);
  EXPECT_EQ(AggregateTimeout(Us({100, 100, 100, 100, 1000000}), Micros(100), 0.2), Micros(100));
}

TEST(Aggregate, EvenCountUsesMiddlePair) { EXPECT_DOUBLE_EQ(MedianNs(Us({1, 2, 3, 10})), 2500.0); }

TEST(Aggregate, EmptyKeepsOld) { EXPECT_EQ(AggregateTimeout({}, Micros(7), 0.2), Micros(7)); }

TEST(Initial, DefaultConstants) {
  EXPECT_EQ(InitialTimeout(Micros(1000), 0.25, Micros(50)), Micros(1300));
  EXPECT_EQ(InitialTimeout(Micros(200), 0.25, Micros(50)), Micros(300));
  EXPECT_THROW(InitialTimeout(Nanos(0), 0.25, Micros(50)), InvalidArgument);
  TimeoutEstimator e;
  EXPECT_FALSE(e.initialized());
  EXPECT_THROW(e.current(), InvalidArgument);
  e.InitializeFromWarmup(Micros(1000));
  EXPECT_EQ(e.current(), Micros(1300));
}

TEST(SplitBudget, ThreeEqualSequential) {
  const std::vector<Phase> ph(3, Phase{PhaseKind::kSequential, 1.0, 1});
  EXPECT_EQ(SplitBudget(Micros(900), ph), Us({300, 300, 300}));
}

TEST(SplitBudget, ParallelPhaseSharesDeadline) {
  const std::vector<Phase> ph{Phase{PhaseKind::kParallel, 1.0, 8}};
  EXPECT_EQ(SplitBudget(Micros(900), ph), Us({900}));
}

TEST(SplitBudget, WeightedSequential) {
  const std::vector<Phase> ph{{PhaseKind::kSequential, 1.0, 1}, {PhaseKind::kSequential, 3.0, 1}};
  EXPECT_EQ(SplitBudget(Micros(1000), ph), Us({250, 750}));
}

TEST(SplitBudget, Rejections) {
  EXPECT_THROW(SplitBudget(Micros(1), {}), InvalidArgument);
  const std::vector<Phase> zero{{PhaseKind::kSequential, 0.0, 1}};
  EXPECT_THROW(SplitBudget(Micros(1), zero), InvalidArgument);
}

TEST(SplitBudget, SlicesSumExactly) {
  Rng rng(5);
  for (int it = 0; it < 2000; ++it) {
    const std::size_t n = 1 + rng.UpTo(15);
    std::vector<Phase> ph;
    for (std::size_t i = 0; i < n; ++i) {
      ph.push_back(Phase{PhaseKind::kSequential, 0.01 + rng.Uniform01() * 10, 1});
    }
    const SimTime total = Nanos(1 + rng.UpTo(10000000));
    const auto out = SplitBudget(total, ph);
    std::uint64_t sum = 0;
    for (SimTime s : out) sum += s.ns;
    ASSERT_EQ(sum, total.ns);
  }
}

TEST(Ewma, GeometricConvergence) {
  // Stationary proposals with median m: |t_k - m| <= (1 - a)^k |t_0 - m|.
  Rng rng(3);
  for (int it = 0; it < 200; ++it) {
    const double alpha = 0.05 + 0.9 * rng.Uniform01();
    const SimTime m = Micros(1 + rng.UpTo(5000));
    SimTime t = Micros(1 + rng.UpTo(5000));
    const double d0 = std::abs(static_cast<double>(t.ns) - static_cast<double>(m.ns));
    const std::vector<SimTime> props{m - Micros(1), m, m + Micros(7)};
    for (int k = 1; k <= 60; ++k) {
      t = AggregateTimeout(props, t, alpha);
      const double dk = std::abs(static_cast<double>(t.ns) - static_cast<double>(m.ns));
      // One ns of rounding slack per step.
      ASSERT_LE(dk, std::pow(1 - alpha, k) * d0 + k) << "alpha " << alpha << " k " << k;
    }
  }
}

TEST(Ewma, MedianRobustToMinorityOutliers) {
  Rng rng(11);
  const double alpha = 0.2;
  for (int it = 0; it < 1000; ++it) {
    const std::size_t n = 3 + rng.UpTo(10);
    const std::size_t bad = (n - 1) / 2;
    std::vector<SimTime> honest;
    for (std::size_t i = 0; i < n - bad; ++i) honest.push_back(Micros(100 + rng.UpTo(100)));
    std::vector<SimTime> all = honest;
    for (std::size_t i = 0; i < bad; ++i) {
      all.push_back(rng.Bernoulli(0.5) ? Micros(1 + rng.UpTo(1000000)) : Nanos(rng.UpTo(10)));
    }
    const SimTime t_old = Micros(50 + rng.UpTo(300));
    const SimTime agg = AggregateTimeout(all, t_old, alpha);
    const auto [lo, hi] = std::minmax_element(honest.begin(), honest.end());
    const double base = (1 - alpha) * static_cast<double>(t_old.ns);
    ASSERT_GE(static_cast<double>(agg.ns), alpha * static_cast<double>(lo->ns) + base - 1);
    ASSERT_LE(static_cast<double>(agg.ns), alpha * static_cast<double>(hi->ns) + base + 1);
  }
}

TEST(Estimator, FirstAggregateWithoutWarmupTakesMedian) {
  TimeoutEstimator e;
  EXPECT_EQ(e.Aggregate(Us({10, 30, 20})), Micros(20));
  EXPECT_EQ(e.Aggregate(Us({70})), Micros(30));
  EXPECT_THROW(TimeoutEstimator{}.Aggregate({}), InvalidArgument);
}

TEST(Estimator, ParamValidation) {
  TimeoutParams p;
  p.alpha = 0;
  EXPECT_THROW(TimeoutEstimator{p}, InvalidArgument);
  p.alpha = 1.5;
  EXPECT_THROW(TimeoutEstimator{p}, InvalidArgument);
}

}  // namespace
}  // namespace xpnet
