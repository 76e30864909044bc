#pragma once

#include <cstdint>
#include <vector>

#include "moesim/buffer.hpp"
#include "moesim/exchange.hpp"
#include "moesim/gating.hpp"

namespace moesim {

/// Calibration knobs for the analytical model. Values are user-supplied;
/// the defaults are sized for a V100-class device (NVLink links, fp16
/// activations, PCIe host link saturating near 12 GB/s).
struct ComputeParams {
  double per_assignment_seconds = 2e-6;      // one token-assignment through one expert
  double reorder_seconds_per_element = 1e-12;
  double gate_overhead_seconds = 1e-4;       // per batch
  int token_dim = 1024;
  int element_bytes = 2;
  double expert_bytes = 100e6;
  double non_expert_bytes = 2e9;  // attention, embeddings, etc. per device
};

/// Latency components for one batch. `total` composes them with two overlap
/// rules: the size exchange hides under reordering, and the CPU-GPU expert
/// transfer hides under the payload exchange:
///   total = gate + max(reorder, a2a_size) + a2a_payload + expert_compute
///           + max(0, cpu_gpu_transfer - a2a_payload)
struct LatencyBreakdown {
  double gate = 0.0;
  double reorder = 0.0;
  double a2a_size = 0.0;
  double a2a_payload = 0.0;
  double expert_compute = 0.0;      // max over devices
  double cpu_gpu_transfer = 0.0;    // raw, before overlap
  double total = 0.0;
  std::vector<double> per_device_compute;
};

struct MemoryBreakdown {
  double static_bytes = 0.0;   // parameters resident per device
  double dynamic_bytes = 0.0;  // activation/mask/index buffers
  double peak_bytes = 0.0;     // static + dynamic
};

/// Static gating charges every capacity slot, placeholders included; the
/// per-device cost is experts_on_device * capacity assignments.
LatencyBreakdown model_latency(const StaticDispatchPlan& plan, const Placement& placement,
                               const CommReport& comm, const ComputeParams& params);

/// Dynamic gating charges only real assignments; the bottleneck device is
/// the one whose experts drew the most. `cache_transfer_seconds` is the
/// CPU-GPU expert copy time for this batch (0 without buffering).
LatencyBreakdown model_latency(const DynamicDispatchPlan& plan, const Placement& placement,
                               const CommReport& comm, const ComputeParams& params,
                               double cache_transfer_seconds = 0.0);

/// Per-device memory model. Static mode provisions the dispatch mask plus
/// the reordered E*capacity token buffer; dynamic mode needs only the k*S
/// token buffer plus index/size integers, independent of capacity factor.
/// With buffering, resident parameters shrink to min(cache_size, E/D).
MemoryBreakdown model_memory(const GatingConfig& cfg, int seq_len, const Topology& topo,
                             const ComputeParams& params,
                             const CacheConfig* cache = nullptr);

/// tokens / lb.total; throws on a nonpositive total.
double throughput(const LatencyBreakdown& lb, int tokens);

}  // namespace moesim
