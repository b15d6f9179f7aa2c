#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xpnet/collectives.hpp"
#include "xpnet/congestion.hpp"
#include "xpnet/fabric.hpp"
#include "xpnet/nic.hpp"

namespace xpnet {

inline constexpr const char* kCsvSchema = "xpnet.v1";

struct FabricParams {
  double bandwidth_gbps = 25.0;
  double base_delay_us = 1.0;
  double jitter_us = 0.0;
  bool preserve_order = true;
  double reorder_prob = 0.0;
  std::optional<BurstLoss> burst;
  std::optional<double> ecn_threshold_us;

  LinkModel Link(double loss_rate) const;
};

struct EncodeCell {
  EncodeMode mode = EncodeMode::kRaw;
  std::uint32_t stride = 1;
};

struct ExperimentConfig {
  std::string scenario = "unnamed";
  FabricParams fabric;
  std::uint32_t nodes = 4;
  CollectiveKind collective = CollectiveKind::kAllReduce;
  std::vector<TransportKind> transports = {TransportKind::kXp, TransportKind::kGbn};
  std::vector<double> loss_rates = {0.0};
  // Tensor sizes in bytes per rank.
  std::vector<std::uint64_t> sizes;
  std::vector<std::uint64_t> full_sizes;
  std::vector<EncodeCell> encodings = {EncodeCell{}};
  std::uint64_t first_seed = 0;
  std::uint32_t seeds = 1;
  // Measured invocations per seed (after the XP warmup).
  std::uint32_t repetitions = 1;
  std::uint32_t mtu = kDefaultMtu;
  std::uint32_t rto_k = 4;
  std::uint32_t window = 64;
  bool nak = true;
  CongestionConfig congestion;
  // Fill tensors with N(0,1) data and report MSE against the exact result.
  bool mse = false;
  double warmup_timeout_ms = 100.0;

  // Throws ConfigError naming the offending field.
  void Validate() const;
  static ExperimentConfig FromJsonText(const std::string& text);
  static ExperimentConfig FromFile(const std::string& path);
};

struct RunOptions {
  std::optional<std::uint64_t> seed;  // run only this seed
  bool full = false;
  unsigned threads = 1;  // 0 = hardware concurrency
};

struct ExperimentRow {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string transport;
  double loss = 0.0;
  std::uint64_t size = 0;
  std::string encode;
  std::uint32_t stride = 1;
  std::uint32_t repetition = 0;
  std::uint64_t cct_ns = 0;
  double p_bytes_lost = 0.0;
  double mse = 0.0;
};

struct CellSummary {
  std::string transport;
  double loss = 0.0;
  std::uint64_t size = 0;
  std::string encode;
  std::uint32_t stride = 1;
  std::size_t runs = 0;
  double cct_mean_ns = 0.0;
  std::uint64_t cct_p50_ns = 0;
  std::uint64_t cct_p99_ns = 0;
  double p_bytes_lost_mean = 0.0;
  double mse_mean = 0.0;
};

// Keeps large simulation buffers on the heap between jobs instead of
// returning them to the OS (glibc only; a no-op elsewhere). Call once at
// startup.
void ConfigureAllocator();

std::vector<ExperimentRow> RunExperiment(const ExperimentConfig& cfg, const RunOptions& opts = {});
std::vector<CellSummary> SummarizeCells(const std::vector<ExperimentRow>& rows);

std::string RowsToCsv(const std::vector<ExperimentRow>& rows);
// Throws ConfigError on a malformed file or an unknown schema.
std::vector<ExperimentRow> ParseCsv(const std::string& text);
std::string CellTable(const std::vector<CellSummary>& cells);

struct SpeedupRow {
  double loss = 0.0;
  std::uint64_t size = 0;
  std::string encode;
  std::uint32_t stride = 1;
  bool complete = false;  // both transports present
  double mean_ratio = 0.0;
  double p99_ratio = 0.0;
  bool flagged = false;  // XP not faster
};

// GBN / XP ratios per cell.
std::vector<SpeedupRow> Speedups(const std::vector<ExperimentRow>& rows);
std::string SpeedupTable(const std::vector<SpeedupRow>& rows);

}  // namespace xpnet
