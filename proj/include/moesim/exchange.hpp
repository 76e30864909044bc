#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "moesim/balance.hpp"
#include "moesim/gating.hpp"

namespace moesim {

/// How a batch's tokens are sharded across devices before the MoE layer.
enum class Residency { kRoundRobin, kSingleSource };

struct Topology {
  int num_devices = 1;
  int experts_per_device = 1;
  std::int64_t token_bytes = 0;     // token dim * element width
  std::int64_t size_msg_bytes = 4;  // one size integer on the wire
  Residency residency = Residency::kRoundRobin;

  int num_experts() const { return num_devices * experts_per_device; }
};

/// Throws unless num_experts divides evenly across num_devices.
Topology make_topology(int num_experts, int num_devices, std::int64_t token_bytes,
                       std::int64_t size_msg_bytes = 4,
                       Residency residency = Residency::kRoundRobin);

using ByteMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct CommPhase {
  std::string name;  // "size" or "payload"
  ByteMatrix bytes;  // num_devices x num_devices, source row -> target column
};

struct CommPlan {
  std::vector<CommPhase> phases;
};

struct CommReport {
  struct Phase {
    std::string name;
    std::int64_t total_bytes = 0;
    std::int64_t max_link_bytes = 0;
    double seconds = 0.0;
  };
  std::vector<Phase> phases;
  double total_seconds = 0.0;
};

/// Fixed-size collective: every expert row ships its full capacity,
/// placeholders included. Per-target volume is apportioned across source
/// devices in proportion to their resident token counts (exactly, by largest
/// remainder), so the total is always E * capacity * token_bytes.
CommPlan plan_static_exchange(const StaticDispatchPlan& plan, const Topology& topo,
                              const Placement& placement);

/// Two-phase collective: a "size" phase of one count per (source, expert)
/// pair, then a "payload" phase carrying exactly the assigned tokens. No
/// placeholder ever crosses the wire.
CommPlan plan_dynamic_exchange(const DynamicDispatchPlan& plan, const Topology& topo,
                               const Placement& placement);

/// Bottleneck-link model: each phase costs link_latency + max_link/bandwidth.
/// Phases serialize, except a "size" phase overlaps token reordering and
/// contributes max(phase time, reorder_seconds).
CommReport simulate_exchange(const CommPlan& plan, double link_bandwidth,
                             double link_latency, double reorder_seconds = 0.0);

void save_comm_plan_csv(const CommPlan& plan, const std::filesystem::path& path);

}  // namespace moesim
