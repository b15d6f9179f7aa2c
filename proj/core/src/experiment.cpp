#include "xpnet/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace xpnet {

using nlohmann::json;

namespace {

SimTime FromMicros(double us) { return SimTime{static_cast<std::uint64_t>(std::llround(us * 1000.0))}; }

[[noreturn]] void Fail(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "': " + why);
}

std::string Fmt(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

TransportKind ParseTransport(const std::string& s, const std::string& field) {
  if (s == "XP") return TransportKind::kXp;
  if (s == "GBN") return TransportKind::kGbn;
  Fail(field, "expected XP or GBN, got '" + s + "'");
}

CollectiveKind ParseCollective(const std::string& s) {
  if (s == "ALLREDUCE") return CollectiveKind::kAllReduce;
  if (s == "ALLGATHER") return CollectiveKind::kAllGather;
  if (s == "REDUCESCATTER") return CollectiveKind::kReduceScatter;
  Fail("collective", "expected ALLREDUCE, ALLGATHER or REDUCESCATTER, got '" + s + "'");
}

EncodeMode ParseEncode(const std::string& s, const std::string& field) {
  if (s == "RAW") return EncodeMode::kRaw;
  if (s == "HD_BLK") return EncodeMode::kHdBlk;
  if (s == "HD_BLK_STR") return EncodeMode::kHdBlkStr;
  Fail(field, "expected RAW, HD_BLK or HD_BLK_STR, got '" + s + "'");
}

template <typename T>
T Get(const json& j, const std::string& key, const std::string& field) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    Fail(field, e.what());
  }
}

void CheckKeys(const json& j, const std::set<std::string>& allowed, const std::string& prefix) {
  if (!j.is_object()) Fail(prefix.empty() ? "<root>" : prefix, "must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) Fail(prefix + it.key(), "unknown field");
  }
}

std::vector<std::uint64_t> ParseSizes(const json& j, const std::string& field) {
  std::vector<std::uint64_t> out;
  if (!j.is_array()) Fail(field, "must be an array of sizes in MiB");
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) Fail(field + "[" + std::to_string(i) + "]", "must be a number");
    const double mb = j[i].get<double>();
    const double bytes = mb * 1024.0 * 1024.0;
    if (!(bytes >= kElementBytes)) Fail(field + "[" + std::to_string(i) + "]", "must be positive");
    out.push_back(static_cast<std::uint64_t>(std::llround(bytes / kElementBytes)) * kElementBytes);
  }
  return out;
}

}  // namespace

LinkModel FabricParams::Link(double loss_rate) const {
  LinkModel l;
  l.bandwidth_bps = bandwidth_gbps * 1e9;
  l.base_delay = FromMicros(base_delay_us);
  l.jitter = FromMicros(jitter_us);
  l.preserve_order = preserve_order;
  l.reorder_prob = reorder_prob;
  l.loss_rate = loss_rate;
  l.burst_loss = burst;
  if (ecn_threshold_us) l.ecn_threshold = FromMicros(*ecn_threshold_us);
  return l;
}

void ExperimentConfig::Validate() const {
  if (scenario.empty()) Fail("scenario", "must not be empty");
  if (nodes < 2) Fail("nodes", "must be >= 2");
  if (transports.empty()) Fail("transports", "must list at least one transport");
  if (loss_rates.empty()) Fail("loss_rates", "must list at least one loss rate");
  for (std::size_t i = 0; i < loss_rates.size(); ++i) {
    if (!(loss_rates[i] >= 0.0 && loss_rates[i] < 1.0)) {
      Fail("loss_rates[" + std::to_string(i) + "]", "must be in [0, 1)");
    }
  }
  if (sizes.empty()) Fail("sizes_mb", "must list at least one size");
  if (encodings.empty()) Fail("encodings", "must list at least one encoding");
  if (seeds == 0) Fail("seeds.count", "must be >= 1");
  if (repetitions == 0) Fail("repetitions", "must be >= 1");
  if (mtu == 0 || mtu % kElementBytes != 0 || !IsPowerOfTwo(mtu / kElementBytes)) {
    Fail("mtu", "must hold a power-of-two number of fp32 elements");
  }
  for (std::size_t i = 0; i < encodings.size(); ++i) {
    const EncodeCell& e = encodings[i];
    const std::uint32_t p = mtu / kElementBytes;
    const std::uint32_t s = e.stride == 0 ? p : e.stride;
    if (e.mode == EncodeMode::kHdBlkStr && (!IsPowerOfTwo(s) || p % s != 0)) {
      Fail("encodings[" + std::to_string(i) + "].stride", "must be a power of two dividing mtu/4");
    }
  }
  if (!(fabric.bandwidth_gbps > 0.0)) Fail("fabric.bandwidth_gbps", "must be > 0");
  if (fabric.base_delay_us < 0.0) Fail("fabric.base_delay_us", "must be >= 0");
  if (fabric.jitter_us < 0.0) Fail("fabric.jitter_us", "must be >= 0");
  if (!(fabric.reorder_prob >= 0.0 && fabric.reorder_prob <= 1.0)) {
    Fail("fabric.reorder_prob", "must be in [0, 1]");
  }
  if (window == 0) Fail("gbn.window", "must be >= 1");
  if (rto_k == 0) Fail("gbn.rto_k", "must be >= 1");
  if (congestion.feedback_aggregation == 0) Fail("congestion.feedback_aggregation", "must be >= 1");
  try {
    congestion.aimd.Validate();
    fabric.Link(0.0).Validate();
  } catch (const InvalidArgument& e) {
    Fail("congestion/fabric", e.what());
  }
  if (!(warmup_timeout_ms > 0.0)) Fail("warmup_timeout_ms", "must be > 0");
}

ExperimentConfig ExperimentConfig::FromJsonText(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  CheckKeys(j,
            {"scenario", "nodes", "collective", "transports", "loss_rates", "sizes_mb", "full_sizes_mb",
             "encodings", "seeds", "repetitions", "mtu", "mse", "fabric", "gbn", "congestion",
             "warmup_timeout_ms", "description"},
            "");
  ExperimentConfig c;
  if (j.contains("scenario")) c.scenario = Get<std::string>(j, "scenario", "scenario");
  if (j.contains("nodes")) c.nodes = Get<std::uint32_t>(j, "nodes", "nodes");
  if (j.contains("collective")) c.collective = ParseCollective(Get<std::string>(j, "collective", "collective"));
  if (j.contains("transports")) {
    c.transports.clear();
    const auto names = Get<std::vector<std::string>>(j, "transports", "transports");
    for (std::size_t i = 0; i < names.size(); ++i) {
      c.transports.push_back(ParseTransport(names[i], "transports[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("loss_rates")) c.loss_rates = Get<std::vector<double>>(j, "loss_rates", "loss_rates");
  if (j.contains("sizes_mb")) c.sizes = ParseSizes(j.at("sizes_mb"), "sizes_mb");
  if (j.contains("full_sizes_mb")) c.full_sizes = ParseSizes(j.at("full_sizes_mb"), "full_sizes_mb");
  if (j.contains("encodings")) {
    c.encodings.clear();
    const json& arr = j.at("encodings");
    if (!arr.is_array()) Fail("encodings", "must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string f = "encodings[" + std::to_string(i) + "]";
      CheckKeys(arr[i], {"mode", "stride"}, f + ".");
      EncodeCell e;
      e.mode = ParseEncode(Get<std::string>(arr[i], "mode", f + ".mode"), f + ".mode");
      e.stride = e.mode == EncodeMode::kHdBlkStr ? 0 : 1;
      if (arr[i].contains("stride")) e.stride = Get<std::uint32_t>(arr[i], "stride", f + ".stride");
      c.encodings.push_back(e);
    }
  }
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    CheckKeys(s, {"first", "count"}, "seeds.");
    if (s.contains("first")) c.first_seed = Get<std::uint64_t>(s, "first", "seeds.first");
    if (s.contains("count")) c.seeds = Get<std::uint32_t>(s, "count", "seeds.count");
  }
  if (j.contains("repetitions")) c.repetitions = Get<std::uint32_t>(j, "repetitions", "repetitions");
  if (j.contains("mtu")) c.mtu = Get<std::uint32_t>(j, "mtu", "mtu");
  if (j.contains("mse")) c.mse = Get<bool>(j, "mse", "mse");
  if (j.contains("warmup_timeout_ms")) {
    c.warmup_timeout_ms = Get<double>(j, "warmup_timeout_ms", "warmup_timeout_ms");
  }
  if (j.contains("fabric")) {
    const json& f = j.at("fabric");
    CheckKeys(f,
              {"bandwidth_gbps", "base_delay_us", "jitter_us", "preserve_order", "reorder_prob", "burst",
               "ecn_threshold_us"},
              "fabric.");
    FabricParams& p = c.fabric;
    if (f.contains("bandwidth_gbps")) p.bandwidth_gbps = Get<double>(f, "bandwidth_gbps", "fabric.bandwidth_gbps");
    if (f.contains("base_delay_us")) p.base_delay_us = Get<double>(f, "base_delay_us", "fabric.base_delay_us");
    if (f.contains("jitter_us")) p.jitter_us = Get<double>(f, "jitter_us", "fabric.jitter_us");
    if (f.contains("preserve_order")) p.preserve_order = Get<bool>(f, "preserve_order", "fabric.preserve_order");
    if (f.contains("reorder_prob")) p.reorder_prob = Get<double>(f, "reorder_prob", "fabric.reorder_prob");
    if (f.contains("ecn_threshold_us")) {
      p.ecn_threshold_us = Get<double>(f, "ecn_threshold_us", "fabric.ecn_threshold_us");
    }
    if (f.contains("burst") && !f.at("burst").is_null()) {
      const json& b = f.at("burst");
      CheckKeys(b, {"prob", "len"}, "fabric.burst.");
      p.burst = BurstLoss{Get<double>(b, "prob", "fabric.burst.prob"),
                          Get<std::uint32_t>(b, "len", "fabric.burst.len")};
    }
  }
  if (j.contains("gbn")) {
    const json& g = j.at("gbn");
    CheckKeys(g, {"rto_k", "window", "nak"}, "gbn.");
    if (g.contains("rto_k")) c.rto_k = Get<std::uint32_t>(g, "rto_k", "gbn.rto_k");
    if (g.contains("window")) c.window = Get<std::uint32_t>(g, "window", "gbn.window");
    if (g.contains("nak")) c.nak = Get<bool>(g, "nak", "gbn.nak");
  }
  if (j.contains("congestion")) {
    const json& g = j.at("congestion");
    CheckKeys(g,
              {"controller", "feedback_aggregation", "min_rate_gbps", "max_rate_gbps", "additive_step_gbps",
               "decrease_factor", "increase_interval_us", "decrease_guard_us"},
              "congestion.");
    if (g.contains("controller")) {
      const auto name = Get<std::string>(g, "controller", "congestion.controller");
      if (name == "aimd") {
        c.congestion.kind = ControllerKind::kAimd;
      } else if (name == "none") {
        c.congestion.kind = ControllerKind::kNone;
      } else {
        Fail("congestion.controller", "expected aimd or none, got '" + name + "'");
      }
    }
    AimdParams& a = c.congestion.aimd;
    if (g.contains("feedback_aggregation")) {
      c.congestion.feedback_aggregation =
          Get<std::uint32_t>(g, "feedback_aggregation", "congestion.feedback_aggregation");
    }
    if (g.contains("min_rate_gbps")) a.min_rate = Get<double>(g, "min_rate_gbps", "congestion.min_rate_gbps") * 1e9;
    if (g.contains("max_rate_gbps")) a.max_rate = Get<double>(g, "max_rate_gbps", "congestion.max_rate_gbps") * 1e9;
    if (g.contains("additive_step_gbps")) {
      a.additive_step = Get<double>(g, "additive_step_gbps", "congestion.additive_step_gbps") * 1e9;
    }
    if (g.contains("decrease_factor")) a.decrease_factor = Get<double>(g, "decrease_factor", "congestion.decrease_factor");
    if (g.contains("increase_interval_us")) {
      a.increase_interval = FromMicros(Get<double>(g, "increase_interval_us", "congestion.increase_interval_us"));
    }
    if (g.contains("decrease_guard_us")) {
      a.decrease_guard = FromMicros(Get<double>(g, "decrease_guard_us", "congestion.decrease_guard_us"));
    }
  } else {
    c.congestion.aimd.max_rate = c.fabric.bandwidth_gbps * 1e9;
  }
  c.Validate();
  return c;
}

ExperimentConfig ExperimentConfig::FromFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return FromJsonText(ss.str());
}

// ---------------------------------------------------------------------------

namespace {

struct Job {
  TransportKind transport;
  double loss;
  std::uint64_t size;
  EncodeCell encode;
  std::uint64_t seed;
};

std::vector<std::vector<double>> Exact(CollectiveKind kind, const std::vector<std::vector<float>>& in,
                                       std::uint64_t chunk) {
  const std::size_t n = in.size();
  const std::size_t len = in[0].size();
  std::vector<double> sum(len, 0.0);
  for (const auto& v : in) {
    for (std::size_t k = 0; k < len; ++k) sum[k] += v[k];
  }
  std::vector<std::vector<double>> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (kind == CollectiveKind::kAllReduce) {
      out[r] = sum;
    } else if (kind == CollectiveKind::kReduceScatter) {
      const std::uint64_t b = std::min<std::uint64_t>(r * chunk, len);
      const std::uint64_t e = std::min<std::uint64_t>(b + chunk, len);
      out[r].assign(sum.begin() + static_cast<std::ptrdiff_t>(b), sum.begin() + static_cast<std::ptrdiff_t>(e));
    } else {
      out[r].resize(len);
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t owner = std::min<std::size_t>(k / chunk, n - 1);
        out[r][k] = in[owner][k];
      }
    }
  }
  return out;
}

std::vector<ExperimentRow> RunJob(const ExperimentConfig& cfg, const Job& job) {
  NicConfig nic;
  nic.mtu_payload = cfg.mtu;
  nic.gbn.window = cfg.window;
  nic.gbn.nak_enabled = cfg.nak;
  nic.rto_k = cfg.rto_k;
  nic.congestion = cfg.congestion;
  nic.xp.completion_mode = CompletionMode::kLastFragment;
  nic.record_timers = false;
  Cluster cluster(cfg.nodes, cfg.fabric.Link(job.loss), job.seed, nic);

  CollectiveOptions opts;
  opts.transport = job.transport;
  opts.encode = EncodeConfig{job.encode.mode, job.encode.stride};
  opts.warmup_timeout = FromMicros(cfg.warmup_timeout_ms * 1000.0);
  std::vector<NodeId> group(cfg.nodes);
  for (std::uint32_t n = 0; n < cfg.nodes; ++n) group[n] = n;
  RingCollective coll(cluster, group, opts);

  const std::uint64_t elems = job.size / kElementBytes;
  std::vector<std::vector<float>> inputs;
  if (cfg.mse) {
    inputs.resize(cfg.nodes);
    // Tensor data has its own stream so it does not depend on the transport.
    Rng data(job.seed ^ 0x9e3779b97f4a7c15ull);
    for (auto& v : inputs) {
      v.resize(elems);
      for (float& x : v) x = static_cast<float>(data.Normal());
    }
  }
  std::vector<std::vector<double>> exact;
  if (cfg.mse) exact = Exact(cfg.collective, inputs, coll.PaddedLength(elems) / cfg.nodes);

  // Without MSE the tensors are all zeros and each run gets fresh ones.
  auto fresh = [&] {
    return cfg.mse ? inputs : std::vector<std::vector<float>>(cfg.nodes, std::vector<float>(elems, 0.0f));
  };
  if (job.transport == TransportKind::kXp) coll.Run(cfg.collective, fresh());

  std::vector<ExperimentRow> rows;
  for (std::uint32_t rep = 0; rep < cfg.repetitions; ++rep) {
    CollectiveResult res = coll.Run(cfg.collective, fresh());
    ExperimentRow row;
    row.scenario = cfg.scenario;
    row.seed = job.seed;
    row.transport = std::string(TransportName(job.transport));
    row.loss = job.loss;
    row.size = job.size;
    row.encode = std::string(EncodeName(job.encode.mode));
    row.stride = job.encode.mode == EncodeMode::kHdBlkStr ? coll.StrideFor(elems) : 1;
    row.repetition = rep;
    row.cct_ns = res.cct.ns;
    row.p_bytes_lost = res.expected_bytes ? static_cast<double>(res.missing_bytes) /
                                                static_cast<double>(res.expected_bytes)
                                          : 0.0;
    if (cfg.mse) {
      double total = 0.0;
      for (std::size_t r = 0; r < res.outputs.size(); ++r) {
        std::vector<float> ex(exact[r].begin(), exact[r].end());
        total += Mse(res.outputs[r], ex);
      }
      row.mse = total / static_cast<double>(res.outputs.size());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void ConfigureAllocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
  mallopt(M_TOP_PAD, 64 * 1024 * 1024);
#endif
}

std::vector<ExperimentRow> RunExperiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.Validate();
  const std::vector<std::uint64_t>& sizes = opts.full && !cfg.full_sizes.empty() ? cfg.full_sizes : cfg.sizes;
  std::vector<std::uint64_t> seeds;
  if (opts.seed) {
    seeds.push_back(*opts.seed);
  } else {
    for (std::uint32_t i = 0; i < cfg.seeds; ++i) seeds.push_back(cfg.first_seed + i);
  }
  std::vector<Job> jobs;
  for (TransportKind t : cfg.transports) {
    for (double loss : cfg.loss_rates) {
      for (std::uint64_t size : sizes) {
        for (const EncodeCell& e : cfg.encodings) {
          for (std::uint64_t s : seeds) jobs.push_back(Job{t, loss, size, e, s});
        }
      }
    }
  }
  std::vector<std::vector<ExperimentRow>> results(jobs.size());
  unsigned threads = opts.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opts.threads;
  threads = std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = RunJob(cfg, jobs[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          try {
            results[i] = RunJob(cfg, jobs[i]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }
  std::vector<ExperimentRow> rows;
  for (auto& r : results) {
    for (auto& row : r) rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::string RowsToCsv(const std::vector<ExperimentRow>& rows) {
  std::ostringstream os;
  os << "# schema=" << kCsvSchema << '\n';
  os << "scenario,seed,transport,loss,size,encode,stride,repetition,cct_ns,p_bytes_lost,mse\n";
  for (const ExperimentRow& r : rows) {
    os << r.scenario << ',' << r.seed << ',' << r.transport << ',' << Fmt("%.6g", r.loss) << ',' << r.size
       << ',' << r.encode << ',' << r.stride << ',' << r.repetition << ',' << r.cct_ns << ','
       << Fmt("%.17g", r.p_bytes_lost) << ',' << Fmt("%.17g", r.mse) << '\n';
  }
  return os.str();
}

std::vector<ExperimentRow> ParseCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool schema_ok = false;
  bool header = false;
  std::vector<ExperimentRow> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line == std::string("# schema=") + kCsvSchema) schema_ok = true;
      continue;
    }
    if (!header) {
      if (line != "scenario,seed,transport,loss,size,encode,stride,repetition,cct_ns,p_bytes_lost,mse") {
        throw ConfigError("csv line " + std::to_string(lineno) + ": unexpected header");
      }
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 11) throw ConfigError("csv line " + std::to_string(lineno) + ": expected 11 fields");
    try {
      ExperimentRow r;
      r.scenario = f[0];
      r.seed = std::stoull(f[1]);
      r.transport = f[2];
      r.loss = std::stod(f[3]);
      r.size = std::stoull(f[4]);
      r.encode = f[5];
      r.stride = static_cast<std::uint32_t>(std::stoul(f[6]));
      r.repetition = static_cast<std::uint32_t>(std::stoul(f[7]));
      r.cct_ns = std::stoull(f[8]);
      r.p_bytes_lost = std::stod(f[9]);
      r.mse = std::stod(f[10]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ConfigError("csv line " + std::to_string(lineno) + ": malformed number");
    }
  }
  if (!schema_ok) throw ConfigError(std::string("csv lacks the '# schema=") + kCsvSchema + "' line");
  if (!header) throw ConfigError("csv lacks a header row");
  return rows;
}

namespace {

using CellKey = std::tuple<std::string, double, std::uint64_t, std::string, std::uint32_t>;

}  // namespace

std::vector<CellSummary> SummarizeCells(const std::vector<ExperimentRow>& rows) {
  std::vector<CellKey> order;
  std::map<CellKey, std::vector<const ExperimentRow*>> groups;
  for (const ExperimentRow& r : rows) {
    CellKey k{r.transport, r.loss, r.size, r.encode, r.stride};
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(&r);
  }
  std::vector<CellSummary> out;
  for (const CellKey& k : order) {
    const auto& g = groups[k];
    CellSummary c;
    std::tie(c.transport, c.loss, c.size, c.encode, c.stride) = k;
    c.runs = g.size();
    std::vector<SimTime> cct;
    long double sum = 0;
    double lost = 0;
    double mse = 0;
    for (const ExperimentRow* r : g) {
      cct.push_back(SimTime{r->cct_ns});
      sum += r->cct_ns;
      lost += r->p_bytes_lost;
      mse += r->mse;
    }
    c.cct_mean_ns = static_cast<double>(sum / g.size());
    c.cct_p50_ns = Percentile(cct, 0.5).ns;
    c.cct_p99_ns = Percentile(cct, 0.99).ns;
    c.p_bytes_lost_mean = lost / static_cast<double>(g.size());
    c.mse_mean = mse / static_cast<double>(g.size());
    out.push_back(c);
  }
  return out;
}

std::string CellTable(const std::vector<CellSummary>& cells) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-9s %-8s %-10s %-11s %-6s %6s %12s %12s %12s %10s %11s\n", "transport",
                "loss", "size", "encode", "stride", "runs", "mean_us", "p50_us", "p99_us", "lost", "mse");
  os << buf;
  for (const CellSummary& c : cells) {
    std::snprintf(buf, sizeof(buf), "%-9s %-8g %-10llu %-11s %-6u %6zu %12.1f %12.1f %12.1f %10.3g %11.4g\n",
                  c.transport.c_str(), c.loss, static_cast<unsigned long long>(c.size), c.encode.c_str(),
                  c.stride, c.runs, c.cct_mean_ns / 1e3, c.cct_p50_ns / 1e3, c.cct_p99_ns / 1e3,
                  c.p_bytes_lost_mean, c.mse_mean);
    os << buf;
  }
  return os.str();
}

std::vector<SpeedupRow> Speedups(const std::vector<ExperimentRow>& rows) {
  const std::vector<CellSummary> cells = SummarizeCells(rows);
  using Key = std::tuple<double, std::uint64_t, std::string, std::uint32_t>;
  std::vector<Key> order;
  std::map<Key, std::pair<const CellSummary*, const CellSummary*>> pairs;
  for (const CellSummary& c : cells) {
    Key k{c.loss, c.size, c.encode, c.stride};
    auto [it, inserted] = pairs.try_emplace(k, nullptr, nullptr);
    if (inserted) order.push_back(k);
    if (c.transport == "XP") it->second.first = &c;
    if (c.transport == "GBN") it->second.second = &c;
  }
  std::vector<SpeedupRow> out;
  for (const Key& k : order) {
    SpeedupRow s;
    std::tie(s.loss, s.size, s.encode, s.stride) = k;
    const auto [xp, gbn] = pairs[k];
    s.complete = xp != nullptr && gbn != nullptr;
    if (s.complete) {
      s.mean_ratio = gbn->cct_mean_ns / xp->cct_mean_ns;
      s.p99_ratio = static_cast<double>(gbn->cct_p99_ns) / static_cast<double>(xp->cct_p99_ns);
      s.flagged = s.mean_ratio <= 1.0;
    }
    out.push_back(s);
  }
  return out;
}

std::string SpeedupTable(const std::vector<SpeedupRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-8s %-10s %-11s %-6s %10s %10s  %s\n", "loss", "size", "encode", "stride",
                "mean_x", "p99_x", "note");
  os << buf;
  for (const SpeedupRow& s : rows) {
    if (!s.complete) {
      std::snprintf(buf, sizeof(buf), "%-8g %-10llu %-11s %-6u %10s %10s  %s\n", s.loss,
                    static_cast<unsigned long long>(s.size), s.encode.c_str(), s.stride, "-", "-", "incomplete");
    } else {
      std::snprintf(buf, sizeof(buf), "%-8g %-10llu %-11s %-6u %10.3f %10.3f  %s\n", s.loss,
                    static_cast<unsigned long long>(s.size), s.encode.c_str(), s.stride, s.mean_ratio,
                    s.p99_ratio, s.flagged ? "XP not faster" : "");
    }
    os << buf;
  }
  return os.str();
}

}  // namespace xpnet
