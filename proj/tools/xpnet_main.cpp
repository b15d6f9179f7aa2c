// xpnet command-line tool: run scenarios, summarize CSVs, print the QP scalability table.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "xpnet/experiment.hpp"
#include "xpnet/state_model.hpp"

namespace {

constexpr const char* kOutDirEnv = "XPNET_OUT_DIR";

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw xpnet::ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path DefaultOutPath(const std::string& scenario) {
  std::filesystem::path dir = ".";
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') dir = env;
  return dir / (scenario + ".csv");
}

int CmdRun(const std::string& config_path, std::optional<std::uint64_t> seed, bool full, std::string out,
           unsigned threads, bool quiet) {
  const xpnet::ExperimentConfig cfg = xpnet::ExperimentConfig::FromFile(config_path);
  xpnet::RunOptions opts;
  opts.seed = seed;
  opts.full = full;
  opts.threads = threads;
  const auto rows = xpnet::RunExperiment(cfg, opts);
  const std::filesystem::path path = out.empty() ? DefaultOutPath(cfg.scenario) : std::filesystem::path(out);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw xpnet::ConfigError("cannot write '" + path.string() + "'");
  os << xpnet::RowsToCsv(rows);
  os.close();
  if (!quiet) {
    std::cout << "scenario " << cfg.scenario << ": " << rows.size() << " rows -> " << path.string() << "\n\n";
    std::cout << xpnet::CellTable(xpnet::SummarizeCells(rows));
  }
  return 0;
}

int CmdSummarize(const std::string& csv_path) {
  const auto rows = xpnet::ParseCsv(ReadFile(csv_path));
  std::cout << xpnet::CellTable(xpnet::SummarizeCells(rows)) << '\n';
  std::cout << "GBN/XP completion-time ratios\n";
  std::cout << xpnet::SpeedupTable(xpnet::Speedups(rows));
  return 0;
}

int CmdScalability(bool csv) {
  const auto rows = xpnet::ComputeScalability();
  if (csv) {
    std::cout << xpnet::ScalabilityCsv(rows);
    return 0;
  }
  std::printf("%-9s %9s %9s %9s %9s %14s %18s\n", "transport", "bytes/QP", "max_QPs", "QPs/peer",
              "cluster", "published_QPs", "published_cluster");
  for (const auto& r : rows) {
    std::printf("%-9s %9u %9s %9u %9s %14s %18s\n", r.transport.c_str(), r.bytes_per_qp,
                xpnet::FormatCount(r.max_qps_reported).c_str(), r.qps_per_peer,
                xpnet::FormatCount(r.cluster_reported).c_str(), xpnet::FormatCount(r.published_max_qps).c_str(),
                xpnet::FormatCount(r.published_cluster).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  xpnet::ConfigureAllocator();
  CLI::App app{"xpnet: lossy-transport collective simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool full = false;
  std::string out;
  unsigned threads = 0;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run a scenario and write CSV rows");
  run->add_option("config", config_path, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "Run only this seed");
  run->add_flag("--full", full, "Use the full-scale tensor sizes");
  run->add_option("--out", out, std::string("Output CSV (default: $") + kOutDirEnv + "/<scenario>.csv)");
  run->add_option("--threads", threads, "Worker threads (0 = all cores)");
  run->add_flag("-q,--quiet", quiet, "Do not print the summary");

  std::string csv_path;
  auto* summarize = app.add_subcommand("summarize", "Print per-cell statistics and GBN/XP ratios");
  summarize->add_option("csv", csv_path, "CSV produced by run")->required();

  bool table_csv = false;
  auto* table5 = app.add_subcommand("table5", "Per-QP state and scalability table");
  table5->add_flag("--csv", table_csv, "Emit CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return CmdRun(config_path, seed, full, out, threads, quiet);
    if (*summarize) return CmdSummarize(csv_path);
    if (*table5) return CmdScalability(table_csv);
  } catch (const std::exception& e) {
    std::cerr << "xpnet: error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
