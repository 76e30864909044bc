// moesim: trace-driven simulator for MoE inference routing.
//
// Subcommands: gen-trace, simulate, balance, cache-sweep, stats. Every run
// writes a manifest.json (config echo + seed) into the output directory so
// results can be reproduced exactly.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moesim/balance.hpp"
#include "moesim/buffer.hpp"
#include "moesim/costmodel.hpp"
#include "moesim/csv.hpp"
#include "moesim/exchange.hpp"
#include "moesim/gating.hpp"
#include "moesim/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moesim;

namespace {

constexpr const char* kArtifactVersion = "0.1.0";

void write_manifest(const fs::path& out_dir, const std::string& command, std::uint64_t seed,
                    const json& config, const std::vector<std::string>& outputs) {
  json manifest;
  manifest["artifact"] = "moesim";
  manifest["version"] = kArtifactVersion;
  manifest["command"] = command;
  manifest["seed"] = seed;
  manifest["config"] = config;
  manifest["outputs"] = outputs;
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest.json");
  out << manifest.dump(2) << '\n';
}

fs::path ensure_out_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

// ----------------------------------------------------------------------------
// Experiment configuration (simulate subcommand)

enum class RunModes { kStatic, kDynamic, kBoth };

struct ExperimentConfig {
  std::optional<std::string> trace_file;
  std::optional<SyntheticSpec> synthetic;
  GatingConfig gating;
  RunModes modes = RunModes::kBoth;
  int num_devices = 1;
  std::int64_t token_bytes = 0;
  std::int64_t size_msg_bytes = 4;
  Residency residency = Residency::kRoundRobin;
  std::optional<CacheConfig> cache;
  std::string balance_policy = "contiguous";
  ComputeParams compute;
  double link_bandwidth = 300e9;
  double link_latency = 1e-6;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
};

[[noreturn]] void config_error(const std::string& field, const std::string& msg) {
  throw std::runtime_error("config field '" + field + "': " + msg);
}

template <typename T>
T get_field(const json& j, const std::string& section, const std::string& name,
            const T& fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    config_error(section.empty() ? name : section + "." + name, e.what());
  }
}

template <typename T>
T require_field(const json& j, const std::string& section, const std::string& name) {
  if (!j.contains(name))
    config_error(section.empty() ? name : section + "." + name, "missing");
  return get_field<T>(j, section, name, T{});
}

ExperimentConfig parse_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }

  ExperimentConfig cfg;
  if (j.contains("trace_file")) cfg.trace_file = j.at("trace_file").get<std::string>();
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    SyntheticSpec spec;
    spec.num_experts = require_field<int>(s, "synthetic", "num_experts");
    spec.top_k = get_field<int>(s, "synthetic", "top_k", 1);
    spec.num_batches = get_field<int>(s, "synthetic", "num_batches", 1);
    spec.seq_len = get_field<int>(s, "synthetic", "seq_len", 1);
    spec.zipf_skew = get_field<double>(s, "synthetic", "zipf_skew", 0.0);
    spec.persistence = get_field<double>(s, "synthetic", "persistence", 0.0);
    spec.active_fraction = get_field<double>(s, "synthetic", "active_fraction", 1.0);
    spec.seed = get_field<std::uint64_t>(s, "synthetic", "seed", 0);
    cfg.synthetic = spec;
  }
  if (cfg.trace_file && cfg.synthetic)
    config_error("trace_file", "give either trace_file or synthetic, not both");
  if (!cfg.trace_file && !cfg.synthetic)
    config_error("trace_file", "a trace source (trace_file or synthetic) is required");
  if (cfg.trace_file && !fs::exists(*cfg.trace_file))
    config_error("trace_file", "file does not exist: " + *cfg.trace_file);

  if (!j.contains("gating")) config_error("gating", "missing");
  const json& g = j.at("gating");
  cfg.gating.num_experts = require_field<int>(g, "gating", "num_experts");
  cfg.gating.top_k = get_field<int>(g, "gating", "top_k", 1);
  cfg.gating.capacity_factor = get_field<double>(g, "gating", "capacity_factor", 1.0);
  const std::string mode = get_field<std::string>(g, "gating", "mode", "both");
  if (mode == "static")
    cfg.modes = RunModes::kStatic;
  else if (mode == "dynamic")
    cfg.modes = RunModes::kDynamic;
  else if (mode == "both")
    cfg.modes = RunModes::kBoth;
  else
    config_error("gating.mode", "expected static, dynamic or both");

  if (!j.contains("topology")) config_error("topology", "missing");
  const json& t = j.at("topology");
  cfg.num_devices = require_field<int>(t, "topology", "num_devices");
  cfg.token_bytes = get_field<std::int64_t>(t, "topology", "token_bytes", 0);
  cfg.size_msg_bytes = get_field<std::int64_t>(t, "topology", "size_msg_bytes", 4);
  const std::string res =
      get_field<std::string>(t, "topology", "residency", "round_robin");
  if (res == "round_robin")
    cfg.residency = Residency::kRoundRobin;
  else if (res == "single_source")
    cfg.residency = Residency::kSingleSource;
  else
    config_error("topology.residency", "expected round_robin or single_source");

  if (j.contains("cache")) {
    const json& c = j.at("cache");
    CacheConfig cc;
    cc.cache_size = require_field<int>(c, "cache", "cache_size");
    cc.policy = cache_policy_from_string(get_field<std::string>(c, "cache", "policy", "LIFO"));
    cc.expert_bytes = get_field<double>(c, "cache", "expert_bytes", 0.0);
    cc.cpu_gpu_bandwidth = get_field<double>(c, "cache", "cpu_gpu_bandwidth", 12e9);
    cfg.cache = cc;
  }

  cfg.balance_policy = get_field<std::string>(j, "", "balance_policy", "contiguous");
  if (cfg.balance_policy != "contiguous" && cfg.balance_policy != "greedy" &&
      cfg.balance_policy != "anticorr")
    config_error("balance_policy", "expected contiguous, greedy or anticorr");

  if (j.contains("compute")) {
    const json& c = j.at("compute");
    cfg.compute.per_assignment_seconds =
        get_field<double>(c, "compute", "per_assignment_seconds", cfg.compute.per_assignment_seconds);
    cfg.compute.reorder_seconds_per_element = get_field<double>(
        c, "compute", "reorder_seconds_per_element", cfg.compute.reorder_seconds_per_element);
    cfg.compute.gate_overhead_seconds =
        get_field<double>(c, "compute", "gate_overhead_seconds", cfg.compute.gate_overhead_seconds);
    cfg.compute.token_dim = get_field<int>(c, "compute", "token_dim", cfg.compute.token_dim);
    cfg.compute.element_bytes =
        get_field<int>(c, "compute", "element_bytes", cfg.compute.element_bytes);
    cfg.compute.expert_bytes =
        get_field<double>(c, "compute", "expert_bytes", cfg.compute.expert_bytes);
    cfg.compute.non_expert_bytes =
        get_field<double>(c, "compute", "non_expert_bytes", cfg.compute.non_expert_bytes);
  }
  if (cfg.token_bytes == 0)
    cfg.token_bytes =
        static_cast<std::int64_t>(cfg.compute.token_dim) * cfg.compute.element_bytes;

  cfg.link_bandwidth = get_field<double>(j, "", "link_bandwidth", cfg.link_bandwidth);
  cfg.link_latency = get_field<double>(j, "", "link_latency", cfg.link_latency);
  cfg.output_dir = get_field<std::string>(j, "", "output_dir", cfg.output_dir);
  cfg.seed = get_field<std::uint64_t>(j, "", "seed", 0);

  // Cross-section consistency.
  if (cfg.synthetic && cfg.synthetic->num_experts != cfg.gating.num_experts)
    config_error("synthetic.num_experts", "inconsistent with gating.num_experts");
  if (cfg.synthetic && j.at("synthetic").contains("top_k") &&
      cfg.synthetic->top_k != cfg.gating.top_k)
    config_error("synthetic.top_k", "inconsistent with gating.top_k");
  if (cfg.gating.num_experts % cfg.num_devices != 0)
    config_error("topology.num_devices", "num_experts must be divisible by num_devices");
  return cfg;
}

Placement pick_placement(const std::string& policy, const LoadMatrix& loads, int devices) {
  if (policy == "greedy") return greedy_place(loads, devices);
  if (policy == "anticorr") return anticorr_place(loads, devices);
  return contiguous_place(static_cast<int>(loads.num_experts()), devices);
}

// ----------------------------------------------------------------------------
// simulate

struct ModeResult {
  LatencyBreakdown latency;  // summed over batches
  MemoryBreakdown memory;    // at the longest batch
  ByteMatrix size_bytes;
  ByteMatrix payload_bytes;
  std::int64_t payload_total = 0;
  double thru = 0.0;
};

int cmd_simulate(const std::string& config_path, const std::string& out_override,
                 std::optional<std::uint64_t> seed_override) {
  ExperimentConfig cfg = parse_experiment_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (seed_override) cfg.seed = *seed_override;
  const fs::path out_dir = ensure_out_dir(cfg.output_dir);

  TokenTrace trace;
  if (cfg.trace_file) {
    trace = load_token_trace(*cfg.trace_file);
    if (trace.num_experts != cfg.gating.num_experts)
      config_error("gating.num_experts", "inconsistent with trace header");
    if (trace.top_k != cfg.gating.top_k)
      config_error("gating.top_k", "inconsistent with trace header");
  } else {
    SyntheticSpec spec = *cfg.synthetic;
    if (spec.seed == 0) spec.seed = cfg.seed;
    spec.top_k = cfg.gating.top_k;
    trace = gen_synthetic_trace(spec);
  }

  const LoadMatrix loads = aggregate_loads(trace);
  const Placement placement = pick_placement(cfg.balance_policy, loads, cfg.num_devices);
  const Topology topo = make_topology(cfg.gating.num_experts, cfg.num_devices,
                                      cfg.token_bytes, cfg.size_msg_bytes, cfg.residency);

  int max_seq = 0;
  std::int64_t total_tokens = 0;
  for (const Batch& b : trace.batches) {
    max_seq = std::max(max_seq, b.seq_len());
    total_tokens += b.seq_len();
  }

  const bool run_static = cfg.modes != RunModes::kDynamic;
  const bool run_dynamic = cfg.modes != RunModes::kStatic;

  // Expert buffering is simulated once over the whole trace (it depends on
  // activity and placement only) and charged to the dynamic lane.
  std::optional<CacheSimResult> cache_sim;
  if (cfg.cache && run_dynamic)
    cache_sim = run_cache_sim(loads, placement, *cfg.cache);

  std::map<std::string, ModeResult> results;
  const int D = cfg.num_devices;

  if (run_static) {
    ModeResult r;
    r.size_bytes = ByteMatrix::Zero(D, D);
    r.payload_bytes = ByteMatrix::Zero(D, D);
    GatingConfig gc = cfg.gating;
    gc.mode = GatingMode::kStatic;
    for (const Batch& batch : trace.batches) {
      const StaticDispatchPlan plan = static_dispatch(batch, gc);
      const CommPlan comm = plan_static_exchange(plan, topo, placement);
      const CommReport rep = simulate_exchange(comm, cfg.link_bandwidth, cfg.link_latency);
      const LatencyBreakdown lb = model_latency(plan, placement, rep, cfg.compute);
      r.latency.gate += lb.gate;
      r.latency.reorder += lb.reorder;
      r.latency.a2a_size += lb.a2a_size;
      r.latency.a2a_payload += lb.a2a_payload;
      r.latency.expert_compute += lb.expert_compute;
      r.latency.cpu_gpu_transfer += lb.cpu_gpu_transfer;
      r.latency.total += lb.total;
      for (const CommPhase& phase : comm.phases)
        (phase.name == "size" ? r.size_bytes : r.payload_bytes) += phase.bytes;
    }
    r.payload_total = r.payload_bytes.sum();
    r.memory = model_memory(gc, max_seq, topo, cfg.compute, nullptr);
    r.thru = total_tokens / r.latency.total;
    results["static"] = std::move(r);
  }

  if (run_dynamic) {
    ModeResult r;
    r.size_bytes = ByteMatrix::Zero(D, D);
    r.payload_bytes = ByteMatrix::Zero(D, D);
    GatingConfig gc = cfg.gating;
    gc.mode = GatingMode::kDynamic;
    for (int b = 0; b < trace.num_batches(); ++b) {
      const Batch& batch = trace.batches[b];
      const DynamicDispatchPlan plan = dynamic_dispatch(batch, gc);
      const CommPlan comm = plan_dynamic_exchange(plan, topo, placement);
      const double reorder = cfg.compute.reorder_seconds_per_element *
                             static_cast<double>(plan.seq_len) * plan.top_k *
                             cfg.compute.token_dim;
      const CommReport rep =
          simulate_exchange(comm, cfg.link_bandwidth, cfg.link_latency, reorder);
      double transfer = 0.0;
      if (cache_sim) {
        std::int64_t batch_misses = 0;
        for (const MissReport& dev : cache_sim->per_device) batch_misses += dev.batch_misses[b];
        transfer = transfer_time(batch_misses, *cfg.cache);
      }
      const LatencyBreakdown lb = model_latency(plan, placement, rep, cfg.compute, transfer);
      r.latency.gate += lb.gate;
      r.latency.reorder += lb.reorder;
      r.latency.a2a_size += lb.a2a_size;
      r.latency.a2a_payload += lb.a2a_payload;
      r.latency.expert_compute += lb.expert_compute;
      r.latency.cpu_gpu_transfer += lb.cpu_gpu_transfer;
      r.latency.total += lb.total;
      for (const CommPhase& phase : comm.phases)
        (phase.name == "size" ? r.size_bytes : r.payload_bytes) += phase.bytes;
    }
    r.payload_total = r.payload_bytes.sum();
    r.memory = model_memory(gc, max_seq, topo, cfg.compute,
                            cfg.cache ? &*cfg.cache : nullptr);
    r.thru = total_tokens / r.latency.total;
    results["dynamic"] = std::move(r);
  }

  std::vector<std::string> outputs;

  {
    CsvWriter csv(out_dir / "latency.csv");
    csv.row("component", "seconds");
    for (const auto& [mode, r] : results) {
      csv.row(mode + ".gate", r.latency.gate);
      csv.row(mode + ".reorder", r.latency.reorder);
      csv.row(mode + ".a2a_size", r.latency.a2a_size);
      csv.row(mode + ".a2a_payload", r.latency.a2a_payload);
      csv.row(mode + ".expert_compute", r.latency.expert_compute);
      csv.row(mode + ".cpu_gpu_transfer", r.latency.cpu_gpu_transfer);
      csv.row(mode + ".total", r.latency.total);
    }
    outputs.push_back("latency.csv");
  }
  {
    CsvWriter csv(out_dir / "memory.csv");
    csv.row("component", "bytes");
    for (const auto& [mode, r] : results) {
      csv.row(mode + ".static", r.memory.static_bytes);
      csv.row(mode + ".dynamic", r.memory.dynamic_bytes);
      csv.row(mode + ".peak", r.memory.peak_bytes);
    }
    outputs.push_back("memory.csv");
  }
  {
    CsvWriter csv(out_dir / "comm.csv");
    csv.row("phase", "src", "dst", "bytes");
    for (const auto& [mode, r] : results) {
      if (r.size_bytes.sum() > 0)
        for (int i = 0; i < D; ++i)
          for (int j = 0; j < D; ++j)
            csv.row(mode + ".size", i, j, static_cast<std::int64_t>(r.size_bytes(i, j)));
      for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j)
          csv.row(mode + ".payload", i, j, static_cast<std::int64_t>(r.payload_bytes(i, j)));
    }
    outputs.push_back("comm.csv");
  }
  if (cache_sim) {
    CsvWriter csv(out_dir / "cache.csv");
    csv.row("device", "accesses", "hits", "misses", "miss_rate", "worst_batch_miss_rate",
            "transfer_seconds");
    for (int d = 0; d < D; ++d) {
      const MissReport& r = cache_sim->per_device[d];
      csv.row(std::to_string(d), r.accesses, r.hits, r.misses, r.miss_rate,
              r.worst_batch_miss_rate, r.transfer_seconds);
    }
    const MissReport& g = cache_sim->global;
    csv.row("global", g.accesses, g.hits, g.misses, g.miss_rate, g.worst_batch_miss_rate,
            g.transfer_seconds);
    outputs.push_back("cache.csv");
  }
  {
    CsvWriter csv(out_dir / "summary.csv");
    csv.row("metric", "value");
    csv.row("waste_factor",
            waste_factor(cfg.gating.num_experts, cfg.gating.capacity_factor, cfg.gating.top_k)
                .value);
    csv.row("capacity", static_cast<std::int64_t>(
                            expert_capacity(cfg.gating.capacity_factor, max_seq)));
    csv.row("num_batches", static_cast<std::int64_t>(trace.num_batches()));
    csv.row("total_tokens", total_tokens);
    for (const auto& [mode, r] : results) {
      csv.row("total_latency_" + mode, r.latency.total);
      csv.row("throughput_" + mode, r.thru);
      csv.row("payload_bytes_" + mode, r.payload_total);
      csv.row("peak_memory_" + mode, r.memory.peak_bytes);
    }
    if (results.count("static") && results.count("dynamic")) {
      csv.row("payload_ratio_static_over_dynamic",
              static_cast<double>(results["static"].payload_total) /
                  static_cast<double>(results["dynamic"].payload_total));
    }
    outputs.push_back("summary.csv");
  }

  json echo;
  {
    std::ifstream in(config_path);
    in >> echo;
  }
  write_manifest(out_dir, "simulate", cfg.seed, echo, outputs);
  return 0;
}

// ----------------------------------------------------------------------------
// gen-trace

int cmd_gen_trace(const SyntheticSpec& spec, const std::string& out_dir_s,
                  const std::string& filename) {
  const fs::path out_dir = ensure_out_dir(out_dir_s);
  const TokenTrace trace = gen_synthetic_trace(spec);
  save_token_trace(trace, out_dir / filename);

  json config = {{"num_experts", spec.num_experts},
                 {"top_k", spec.top_k},
                 {"num_batches", spec.num_batches},
                 {"seq_len", spec.seq_len},
                 {"zipf_skew", spec.zipf_skew},
                 {"persistence", spec.persistence},
                 {"active_fraction", spec.active_fraction},
                 {"seed", spec.seed}};
  write_manifest(out_dir, "gen-trace", spec.seed, config, {filename});
  return 0;
}

// ----------------------------------------------------------------------------
// balance

int cmd_balance(const std::string& trace_path, int devices, const std::string& policy,
                double split, double anticorr_weight, const std::string& out_dir_s) {
  const fs::path out_dir = ensure_out_dir(out_dir_s);
  const TokenTrace trace = load_token_trace(trace_path);
  const LoadMatrix loads = aggregate_loads(trace);
  auto [train, test] = split_trace(loads, split);

  Placement placement;
  if (policy == "greedy")
    placement = greedy_place(train, devices);
  else if (policy == "anticorr")
    placement = anticorr_place(train, devices, anticorr_weight);
  else if (policy == "contiguous")
    placement = contiguous_place(static_cast<int>(loads.num_experts()), devices);
  else
    throw std::runtime_error("unknown balance policy: " + policy);

  const Placement baseline = contiguous_place(static_cast<int>(loads.num_experts()), devices);
  const BalanceReport report = eval_balance(placement, test);
  const BalanceReport base_report = eval_balance(baseline, test);

  save_placement_csv(placement, out_dir / "placement.csv");
  {
    CsvWriter csv(out_dir / "balance.csv");
    csv.row("batch", "device", "load");
    for (Eigen::Index b = 0; b < report.device_load.cols(); ++b)
      for (Eigen::Index d = 0; d < report.device_load.rows(); ++d)
        csv.row(static_cast<int>(b), static_cast<int>(d), report.device_load(d, b));
    csv.row("metric", "value");
    csv.row(policy + "_max_load", report.max_load);
    csv.row(policy + "_avg_max_load", report.avg_max_load);
    csv.row(policy + "_objective", report.objective);
    csv.row("contiguous_max_load", base_report.max_load);
    csv.row("contiguous_avg_max_load", base_report.avg_max_load);
    csv.row("contiguous_objective", base_report.objective);
  }

  json config = {{"trace", trace_path}, {"devices", devices},   {"policy", policy},
                 {"split", split},      {"weight", anticorr_weight}};
  write_manifest(out_dir, "balance", 0, config, {"placement.csv", "balance.csv"});
  return 0;
}

// ----------------------------------------------------------------------------
// cache-sweep

std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> sizes;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos
                                                    ? std::string::npos
                                                    : comma - start);
    if (!item.empty()) {
      const std::size_t dash = item.find('-', 1);  // allow plain "3"
      if (dash == std::string::npos) {
        sizes.push_back(std::stoi(item));
      } else {
        const int lo = std::stoi(item.substr(0, dash));
        const int hi = std::stoi(item.substr(dash + 1));
        for (int s = lo; s <= hi; ++s) sizes.push_back(s);
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (sizes.empty()) throw std::runtime_error("empty cache size list");
  return sizes;
}

int cmd_cache_sweep(const std::string& trace_path, int devices,
                    const std::string& placement_path, const std::string& sizes_text,
                    const std::string& policies_text, double expert_bytes,
                    double bandwidth, const std::string& out_dir_s) {
  const fs::path out_dir = ensure_out_dir(out_dir_s);
  const TokenTrace trace = load_token_trace(trace_path);
  const LoadMatrix loads = aggregate_loads(trace);

  Placement placement;
  if (!placement_path.empty()) {
    placement = load_placement_csv(placement_path);
    if (placement.num_experts() != trace.num_experts)
      throw std::runtime_error("placement file does not match trace expert count");
  } else {
    placement = contiguous_place(trace.num_experts, devices);
  }

  const std::vector<int> sizes = parse_sizes(sizes_text);
  std::vector<CachePolicy> policies;
  {
    std::size_t start = 0;
    while (start <= policies_text.size()) {
      const std::size_t comma = policies_text.find(',', start);
      const std::string item =
          policies_text.substr(start, comma == std::string::npos ? std::string::npos
                                                                 : comma - start);
      if (!item.empty()) policies.push_back(cache_policy_from_string(item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (policies.empty()) throw std::runtime_error("empty cache policy list");

  CacheConfig base;
  base.expert_bytes = expert_bytes;
  base.cpu_gpu_bandwidth = bandwidth;
  const std::vector<SweepRow> rows = cache_sweep(loads, placement, sizes, policies, base);
  save_sweep_csv(rows, out_dir / "cache_sweep.csv");

  json config = {{"trace", trace_path},
                 {"devices", placement.num_devices},
                 {"placement", placement_path},
                 {"sizes", sizes_text},
                 {"policies", policies_text},
                 {"expert_bytes", expert_bytes},
                 {"cpu_gpu_bandwidth", bandwidth}};
  write_manifest(out_dir, "cache-sweep", 0, config, {"cache_sweep.csv"});
  return 0;
}

// ----------------------------------------------------------------------------
// stats

int cmd_stats(const std::string& trace_path, const std::string& out_dir_s) {
  const fs::path out_dir = ensure_out_dir(out_dir_s);
  const TokenTrace trace = load_token_trace(trace_path);
  const LoadMatrix loads = aggregate_loads(trace);
  const SparsityReport report = sparsity_stats(loads);

  save_load_matrix_csv(loads, out_dir / "loads.csv");
  {
    CsvWriter csv(out_dir / "stats.csv");
    csv.row("batch", "inactive_experts", "inactive_fraction", "top_share");
    for (std::size_t b = 0; b < report.inactive_per_batch.size(); ++b)
      csv.row(static_cast<int>(b), report.inactive_per_batch[b],
              static_cast<double>(report.inactive_per_batch[b]) / trace.num_experts,
              report.top_share_per_batch[b]);
    csv.row("metric", "value");
    csv.row("mean_inactive_fraction", report.mean_inactive_fraction);
    csv.row("max_inactive_fraction", report.max_inactive_fraction);
    csv.row("never_active", static_cast<std::int64_t>(report.never_active));
  }

  json config = {{"trace", trace_path}};
  write_manifest(out_dir, "stats", 0, config, {"loads.csv", "stats.csv"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trace-driven simulator for MoE inference routing"};
  app.require_subcommand(1);

  // gen-trace
  auto* gen = app.add_subcommand("gen-trace", "Generate a synthetic routing trace");
  SyntheticSpec spec;
  std::string gen_out = ".";
  std::string gen_name = "trace.jsonl";
  gen->add_option("--experts", spec.num_experts, "Number of experts")->required();
  gen->add_option("--topk", spec.top_k, "Experts per token");
  gen->add_option("--batches", spec.num_batches, "Number of batches");
  gen->add_option("--seqlen", spec.seq_len, "Tokens per batch");
  gen->add_option("--zipf", spec.zipf_skew, "Popularity skew exponent (0 = uniform)");
  gen->add_option("--persist", spec.persistence, "Probability the hot set carries over");
  gen->add_option("--active-frac", spec.active_fraction, "Fraction of experts active per batch");
  gen->add_option("--seed", spec.seed, "RNG seed");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--output", gen_name, "Trace filename");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run the full gating/exchange/cache pipeline");
  std::string sim_config;
  std::string sim_out;
  std::uint64_t sim_seed = 0;
  bool sim_seed_set = false;
  sim->add_option("--config", sim_config, "Experiment config (JSON)")->required();
  sim->add_option("--out", sim_out, "Output directory (overrides config)");
  sim->add_option("--seed", sim_seed, "Seed (overrides config)")
      ->each([&](const std::string&) { sim_seed_set = true; });

  // balance
  auto* bal = app.add_subcommand("balance", "Two-half placement evaluation");
  std::string bal_trace, bal_policy = "greedy", bal_out = ".";
  int bal_devices = 1;
  double bal_split = 0.5, bal_weight = 0.5;
  bal->add_option("--trace", bal_trace, "Trace file (JSONL)")->required();
  bal->add_option("--devices", bal_devices, "Device count")->required();
  bal->add_option("--policy", bal_policy, "contiguous | greedy | anticorr");
  bal->add_option("--split", bal_split, "History fraction used for placement");
  bal->add_option("--weight", bal_weight, "Anti-correlation weight");
  bal->add_option("--out", bal_out, "Output directory");

  // cache-sweep
  auto* sweep = app.add_subcommand("cache-sweep", "Miss-rate sweep over cache sizes/policies");
  std::string sw_trace, sw_placement, sw_sizes = "1-16", sw_policies = "LIFO,FIFO,MIN",
                         sw_out = ".";
  int sw_devices = 1;
  double sw_expert_bytes = 0.0, sw_bandwidth = 12e9;
  sweep->add_option("--trace", sw_trace, "Trace file (JSONL)")->required();
  sweep->add_option("--devices", sw_devices, "Device count (contiguous placement)");
  sweep->add_option("--placement", sw_placement, "Placement CSV (overrides --devices)");
  sweep->add_option("--sizes", sw_sizes, "Sizes, e.g. 1-16 or 1,2,4,8");
  sweep->add_option("--policies", sw_policies, "Comma list of LIFO,FIFO,MIN");
  sweep->add_option("--expert-bytes", sw_expert_bytes, "Parameter bytes per expert");
  sweep->add_option("--bandwidth", sw_bandwidth, "CPU-GPU bandwidth (bytes/s)");
  sweep->add_option("--out", sw_out, "Output directory");

  // stats
  auto* stats = app.add_subcommand("stats", "Load matrix and sparsity statistics");
  std::string st_trace, st_out = ".";
  stats->add_option("--trace", st_trace, "Trace file (JSONL)")->required();
  stats->add_option("--out", st_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_trace(spec, gen_out, gen_name);
    if (sim->parsed())
      return cmd_simulate(sim_config, sim_out,
                          sim_seed_set ? std::optional<std::uint64_t>(sim_seed)
                                       : std::nullopt);
    if (bal->parsed())
      return cmd_balance(bal_trace, bal_devices, bal_policy, bal_split, bal_weight, bal_out);
    if (sweep->parsed())
      return cmd_cache_sweep(sw_trace, sw_devices, sw_placement, sw_sizes, sw_policies,
                             sw_expert_bytes, sw_bandwidth, sw_out);
    if (stats->parsed()) return cmd_stats(st_trace, st_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
