#include "moesim/costmodel.hpp"

#include <algorithm>
#include <stdexcept>

namespace moesim {

namespace {

void check_params(const ComputeParams& params) {
  if (params.per_assignment_seconds < 0.0 || params.reorder_seconds_per_element < 0.0 ||
      params.gate_overhead_seconds < 0.0)
    throw std::invalid_argument("compute times must be nonnegative");
  if (params.token_dim <= 0 || params.element_bytes <= 0)
    throw std::invalid_argument("token_dim and element_bytes must be positive");
  if (params.expert_bytes < 0.0 || params.non_expert_bytes < 0.0)
    throw std::invalid_argument("byte sizes must be nonnegative");
}

double phase_seconds(const CommReport& comm, const std::string& name) {
  double total = 0.0;
  for (const auto& phase : comm.phases)
    if (phase.name == name) total += phase.seconds;
  return total;
}

double compose_total(LatencyBreakdown& lb) {
  return lb.gate + std::max(lb.reorder, lb.a2a_size) + lb.a2a_payload +
         lb.expert_compute + std::max(0.0, lb.cpu_gpu_transfer - lb.a2a_payload);
}

}  // namespace

LatencyBreakdown model_latency(const StaticDispatchPlan& plan, const Placement& placement,
                               const CommReport& comm, const ComputeParams& params) {
  check_params(params);
  validate(placement);
  if (placement.num_experts() != plan.num_experts)
    throw std::invalid_argument("placement does not match plan");

  LatencyBreakdown lb;
  lb.gate = params.gate_overhead_seconds;
  // Mask construction and the (E, S, capacity) x (S, token_dim) reorder
  // multiply touch every mask element once per token-dim lane.
  lb.reorder = params.reorder_seconds_per_element * static_cast<double>(plan.num_experts) *
               plan.seq_len * plan.capacity * params.token_dim;
  lb.a2a_size = phase_seconds(comm, "size");
  lb.a2a_payload = phase_seconds(comm, "payload");

  // Every capacity slot is processed, placeholders included.
  lb.per_device_compute.assign(placement.num_devices, 0.0);
  for (int e = 0; e < plan.num_experts; ++e)
    lb.per_device_compute[placement.device_of[e]] +=
        params.per_assignment_seconds * plan.capacity;
  lb.expert_compute =
      *std::max_element(lb.per_device_compute.begin(), lb.per_device_compute.end());
  lb.cpu_gpu_transfer = 0.0;
  lb.total = compose_total(lb);
  return lb;
}

LatencyBreakdown model_latency(const DynamicDispatchPlan& plan, const Placement& placement,
                               const CommReport& comm, const ComputeParams& params,
                               double cache_transfer_seconds) {
  check_params(params);
  validate(placement);
  if (placement.num_experts() != plan.num_experts)
    throw std::invalid_argument("placement does not match plan");
  if (cache_transfer_seconds < 0.0)
    throw std::invalid_argument("transfer time must be nonnegative");

  LatencyBreakdown lb;
  lb.gate = params.gate_overhead_seconds;
  lb.reorder = params.reorder_seconds_per_element *
               static_cast<double>(plan.seq_len) * plan.top_k * params.token_dim;
  lb.a2a_size = phase_seconds(comm, "size");
  lb.a2a_payload = phase_seconds(comm, "payload");

  lb.per_device_compute.assign(placement.num_devices, 0.0);
  for (int e = 0; e < plan.num_experts; ++e)
    lb.per_device_compute[placement.device_of[e]] +=
        params.per_assignment_seconds * plan.counts[e];
  lb.expert_compute =
      *std::max_element(lb.per_device_compute.begin(), lb.per_device_compute.end());
  lb.cpu_gpu_transfer = cache_transfer_seconds;
  lb.total = compose_total(lb);
  return lb;
}

MemoryBreakdown model_memory(const GatingConfig& cfg, int seq_len, const Topology& topo,
                             const ComputeParams& params, const CacheConfig* cache) {
  check_params(params);
  if (seq_len < 1) throw std::invalid_argument("seq_len must be positive");
  if (topo.num_experts() != cfg.num_experts)
    throw std::invalid_argument("topology/gating expert count mismatch");

  MemoryBreakdown mb;
  const int resident = cache ? std::min(cache->cache_size, topo.experts_per_device)
                             : topo.experts_per_device;
  mb.static_bytes = params.non_expert_bytes + resident * params.expert_bytes;

  const double elem = params.element_bytes;
  if (cfg.mode == GatingMode::kStatic) {
    const std::int64_t mask =
        dispatch_mask_elements(seq_len, cfg.num_experts, cfg.capacity_factor);
    const double reordered = static_cast<double>(cfg.num_experts) *
                             expert_capacity(cfg.capacity_factor, seq_len) *
                             params.token_dim;
    mb.dynamic_bytes = static_cast<double>(mask) * elem + reordered * elem;
  } else {
    const double slots = static_cast<double>(cfg.top_k) * seq_len;
    mb.dynamic_bytes = (slots + cfg.num_experts) * topo.size_msg_bytes +
                       slots * params.token_dim * elem;
  }
  mb.peak_bytes = mb.static_bytes + mb.dynamic_bytes;
  return mb;
}

double throughput(const LatencyBreakdown& lb, int tokens) {
  if (lb.total <= 0.0) throw std::invalid_argument("throughput requires a positive total");
  if (tokens < 0) throw std::invalid_argument("token count must be nonnegative");
  return tokens / lb.total;
}

}  // namespace moesim
