#include "moesim/exchange.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "moesim/csv.hpp"

namespace moesim {

namespace {

void check_compat(int plan_experts, const Topology& topo, const Placement& placement) {
  if (placement.num_experts() != plan_experts)
    throw std::invalid_argument("placement does not cover the plan's experts");
  if (placement.num_devices != topo.num_devices)
    throw std::invalid_argument("placement/topology device count mismatch");
  if (topo.num_experts() != plan_experts)
    throw std::invalid_argument("topology expert count mismatch");
  validate(placement);
}

// Tokens per source device under the topology's residency scheme.
std::vector<std::int64_t> source_tokens(const Topology& topo, int seq_len) {
  std::vector<std::int64_t> counts(topo.num_devices, 0);
  if (topo.residency == Residency::kSingleSource) {
    counts[0] = seq_len;
  } else {
    for (int d = 0; d < topo.num_devices; ++d)
      counts[d] = seq_len / topo.num_devices + (d < seq_len % topo.num_devices ? 1 : 0);
  }
  return counts;
}

int source_of_token(const Topology& topo, int token) {
  return topo.residency == Residency::kSingleSource ? 0 : token % topo.num_devices;
}

}  // namespace

Topology make_topology(int num_experts, int num_devices, std::int64_t token_bytes,
                       std::int64_t size_msg_bytes, Residency residency) {
  if (num_devices < 1) throw std::invalid_argument("num_devices must be positive");
  if (num_experts < 1 || num_experts % num_devices != 0)
    throw std::invalid_argument("num_experts must be a positive multiple of num_devices");
  if (token_bytes <= 0 || size_msg_bytes <= 0)
    throw std::invalid_argument("byte sizes must be positive");
  Topology topo;
  topo.num_devices = num_devices;
  topo.experts_per_device = num_experts / num_devices;
  topo.token_bytes = token_bytes;
  topo.size_msg_bytes = size_msg_bytes;
  topo.residency = residency;
  return topo;
}

CommPlan plan_static_exchange(const StaticDispatchPlan& plan, const Topology& topo,
                              const Placement& placement) {
  check_compat(plan.num_experts, topo, placement);
  const int D = topo.num_devices;
  const std::vector<std::int64_t> src_tokens = source_tokens(topo, plan.seq_len);
  const std::int64_t S = plan.seq_len;

  std::vector<std::int64_t> experts_on(D, 0);
  for (int e = 0; e < plan.num_experts; ++e) ++experts_on[placement.device_of[e]];

  CommPhase payload{"payload", ByteMatrix::Zero(D, D)};
  for (int j = 0; j < D; ++j) {
    // Every slot ships, placeholder or not. Apportion a target's slots over
    // sources by resident token share, largest remainder, so the per-target
    // total is exact.
    const std::int64_t slots_j = experts_on[j] * plan.capacity;
    std::vector<std::int64_t> share(D);
    std::vector<std::pair<std::int64_t, int>> rem(D);
    std::int64_t assigned = 0;
    for (int i = 0; i < D; ++i) {
      share[i] = slots_j * src_tokens[i] / S;
      rem[i] = {slots_j * src_tokens[i] % S, i};
      assigned += share[i];
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::int64_t r = slots_j - assigned, idx = 0; r > 0; --r, ++idx)
      ++share[rem[idx].second];
    for (int i = 0; i < D; ++i) payload.bytes(i, j) = share[i] * topo.token_bytes;
  }

  CommPlan result;
  result.phases.push_back(std::move(payload));
  return result;
}

CommPlan plan_dynamic_exchange(const DynamicDispatchPlan& plan, const Topology& topo,
                               const Placement& placement) {
  check_compat(plan.num_experts, topo, placement);
  const int D = topo.num_devices;

  // Phase 1: every source tells every device the incoming count for each of
  // its experts.
  CommPhase size{"size", ByteMatrix::Zero(D, D)};
  for (int j = 0; j < D; ++j)
    size.bytes.col(j).setConstant(topo.experts_per_device * topo.size_msg_bytes);

  // Phase 2: exactly the assigned tokens, nothing else.
  CommPhase payload{"payload", ByteMatrix::Zero(D, D)};
  for (int e = 0; e < plan.num_experts; ++e) {
    const int j = placement.device_of[e];
    for (int pos = plan.splits[e]; pos < plan.splits[e + 1]; ++pos) {
      const int token = plan.order[pos] / plan.top_k;
      payload.bytes(source_of_token(topo, token), j) += topo.token_bytes;
    }
  }

  CommPlan result;
  result.phases.push_back(std::move(size));
  result.phases.push_back(std::move(payload));
  return result;
}

CommReport simulate_exchange(const CommPlan& plan, double link_bandwidth,
                             double link_latency, double reorder_seconds) {
  if (link_bandwidth <= 0.0) throw std::invalid_argument("bandwidth must be positive");
  if (link_latency < 0.0 || reorder_seconds < 0.0)
    throw std::invalid_argument("times must be nonnegative");

  CommReport report;
  for (const CommPhase& phase : plan.phases) {
    CommReport::Phase p;
    p.name = phase.name;
    p.total_bytes = phase.bytes.sum();
    p.max_link_bytes = phase.bytes.size() > 0 ? phase.bytes.maxCoeff() : 0;
    p.seconds = link_latency + static_cast<double>(p.max_link_bytes) / link_bandwidth;
    report.total_seconds +=
        phase.name == "size" ? std::max(p.seconds, reorder_seconds) : p.seconds;
    report.phases.push_back(std::move(p));
  }
  return report;
}

void save_comm_plan_csv(const CommPlan& plan, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.row("phase", "src", "dst", "bytes");
  for (const CommPhase& phase : plan.phases)
    for (Eigen::Index i = 0; i < phase.bytes.rows(); ++i)
      for (Eigen::Index j = 0; j < phase.bytes.cols(); ++j)
        csv.row(phase.name, static_cast<int>(i), static_cast<int>(j),
                static_cast<std::int64_t>(phase.bytes(i, j)));
}

}  // namespace moesim
