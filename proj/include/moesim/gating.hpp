#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "moesim/trace.hpp"

namespace moesim {

enum class GatingMode { kStatic, kDynamic };

struct GatingConfig {
  int num_experts = 0;
  int top_k = 1;
  double capacity_factor = 1.0;  // used in static mode only
  GatingMode mode = GatingMode::kDynamic;
};

/// Sentinel for unused capacity slots in a static plan.
inline constexpr int kPlaceholder = -1;

/// Per-expert capacity under capacity factor c for a batch of seq_len tokens:
/// ceil(c * seq_len), with values within 1e-9 of an integer snapped to it so
/// that e.g. c = 0.1, S = 30 yields 3 rather than 4.
int expert_capacity(double capacity_factor, int seq_len);

/// Static-capacity routing decision. Assignment slots are numbered
/// token_index * k + j (j < k); slots(e, c) holds a slot id or kPlaceholder.
/// An assignment appears either in `slots` or in `dropped`, never both.
struct StaticDispatchPlan {
  int seq_len = 0;
  int num_experts = 0;
  int top_k = 1;
  int capacity = 0;                            // per expert
  Eigen::MatrixXi slots;                       // num_experts x capacity
  std::vector<std::pair<int, int>> dropped;    // (token_index, expert_id)

  int placed() const {
    return static_cast<int>((slots.array() != kPlaceholder).count());
  }
};

/// Capacity-free routing decision: a stable grouping of all k*S assignment
/// slots by expert. `order` is the argsort permutation (grouped slot ids),
/// `splits[e]..splits[e+1]` bounds expert e's segment, and within a segment
/// slot ids are increasing (stability). Nothing is ever dropped.
struct DynamicDispatchPlan {
  int seq_len = 0;
  int num_experts = 0;
  int top_k = 1;
  std::vector<int> order;   // permutation of [0, k*S)
  std::vector<int> counts;  // per-expert assignment counts, size E
  std::vector<int> splits;  // exclusive prefix sums of counts, size E + 1
};

/// Provisioned slots over real assignments: E * C / k. The excess compute,
/// communication and memory multiplier of static gating.
struct WasteFactor {
  double value = 0.0;
};

StaticDispatchPlan static_dispatch(const Batch& batch, const GatingConfig& cfg);
DynamicDispatchPlan dynamic_dispatch(const Batch& batch, const GatingConfig& cfg);

WasteFactor waste_factor(int num_experts, double capacity_factor, int top_k);

/// Size of the static dispatch-mask tensor (E, S, ceil(C*S)).
std::int64_t dispatch_mask_elements(int seq_len, int num_experts, double capacity_factor);

/// Instrumentation counters backing the O(kS log kS + kS * token_dim)
/// dispatch cost claim. `comparisons` is measured by re-running a stable
/// comparison argsort over the plan's expert keys.
struct DispatchCostCounts {
  std::int64_t comparisons = 0;
  std::int64_t count_passes = 0;     // k*S, one bincount pass
  std::int64_t gather_elements = 0;  // k*S * token_dim
};

DispatchCostCounts dispatch_cost_counts(const DynamicDispatchPlan& plan, int token_dim);

/// One-line JSON dumps of a plan for debugging, keyed by the field names of
/// the plan structs. Placeholder slots serialize as -1.
std::string debug_json(const StaticDispatchPlan& plan);
std::string debug_json(const DynamicDispatchPlan& plan);

/// One expert result delivered back to a token, tagged with the expert id and
/// the token's gate weight for that expert.
template <typename T>
struct CombinedEntry {
  int expert = 0;
  double weight = 0.0;
  T payload{};
};

template <typename T>
using CombinedBatch = std::vector<std::vector<CombinedEntry<T>>>;

/// Restores expert outputs to token order. `outputs` must hold one payload
/// per position of `plan.order` (i.e. grouped by expert segment, k*S total).
/// Every token receives exactly k entries, in assignment-slot order.
template <typename T>
CombinedBatch<T> combine(const DynamicDispatchPlan& plan, const Batch& batch,
                         std::span<const T> outputs) {
  const int k = plan.top_k;
  const std::size_t total = static_cast<std::size_t>(plan.seq_len) * k;
  if (outputs.size() != total)
    throw std::invalid_argument("combine: payload count mismatch vs. plan");
  if (batch.seq_len() != plan.seq_len)
    throw std::invalid_argument("combine: batch does not match plan");

  CombinedBatch<T> result(plan.seq_len);
  for (auto& entries : result) entries.reserve(k);
  for (std::size_t pos = 0; pos < total; ++pos) {
    const int slot = plan.order[pos];
    const int token = slot / k;
    const int j = slot % k;
    const auto& ta = batch.tokens[token];
    result[token].push_back(CombinedEntry<T>{ta.experts[j], ta.weights[j], outputs[pos]});
  }
  // Entries arrive in expert order; present them in assignment-slot order.
  for (int token = 0; token < plan.seq_len; ++token) {
    auto& entries = result[token];
    const auto& ta = batch.tokens[token];
    std::sort(entries.begin(), entries.end(),
              [&](const CombinedEntry<T>& a, const CombinedEntry<T>& b) {
                auto slot_of = [&](int expert) {
                  for (int j = 0; j < k; ++j)
                    if (ta.experts[j] == expert) return j;
                  return k;
                };
                return slot_of(a.expert) < slot_of(b.expert);
              });
  }
  return result;
}

/// Static-mode combine. `outputs` must hold one payload per capacity slot,
/// expert-major (E * capacity total); placeholder positions are present but
/// ignored. Dropped assignments contribute no entry, so a token may receive
/// fewer than k entries.
template <typename T>
CombinedBatch<T> combine(const StaticDispatchPlan& plan, const Batch& batch,
                         std::span<const T> outputs) {
  const int k = plan.top_k;
  const std::size_t total =
      static_cast<std::size_t>(plan.num_experts) * plan.capacity;
  if (outputs.size() != total)
    throw std::invalid_argument("combine: payload count mismatch vs. plan");
  if (batch.seq_len() != plan.seq_len)
    throw std::invalid_argument("combine: batch does not match plan");

  CombinedBatch<T> result(plan.seq_len);
  for (int e = 0; e < plan.num_experts; ++e) {
    for (int c = 0; c < plan.capacity; ++c) {
      const int slot = plan.slots(e, c);
      if (slot == kPlaceholder) continue;
      const int token = slot / k;
      const int j = slot % k;
      const auto& ta = batch.tokens[token];
      result[token].push_back(
          CombinedEntry<T>{e, ta.weights[j], outputs[static_cast<std::size_t>(e) * plan.capacity + c]});
    }
  }
  for (int token = 0; token < plan.seq_len; ++token) {
    auto& entries = result[token];
    const auto& ta = batch.tokens[token];
    std::sort(entries.begin(), entries.end(),
              [&](const CombinedEntry<T>& a, const CombinedEntry<T>& b) {
                auto slot_of = [&](int expert) {
                  for (int j = 0; j < k; ++j)
                    if (ta.experts[j] == expert) return j;
                  return k;
                };
                return slot_of(a.expert) < slot_of(b.expert);
              });
  }
  return result;
}

}  // namespace moesim
