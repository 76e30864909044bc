#include "moesim/gating.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

namespace moesim {

namespace {

void check_batch(const Batch& batch, const GatingConfig& cfg) {
  if (cfg.num_experts < 1) throw std::invalid_argument("num_experts must be positive");
  if (cfg.top_k < 1) throw std::invalid_argument("top_k must be positive");
  if (cfg.top_k > cfg.num_experts)
    throw std::invalid_argument("top_k exceeds num_experts");
  if (batch.tokens.empty()) throw std::invalid_argument("empty batch");
}

}  // namespace

int expert_capacity(double capacity_factor, int seq_len) {
  const double raw = capacity_factor * seq_len;
  const double nearest = std::round(raw);
  if (std::abs(raw - nearest) < 1e-9 * std::max(1.0, std::abs(raw)))
    return static_cast<int>(nearest);
  return static_cast<int>(std::ceil(raw));
}

StaticDispatchPlan static_dispatch(const Batch& batch, const GatingConfig& cfg) {
  check_batch(batch, cfg);
  if (cfg.mode != GatingMode::kStatic)
    throw std::invalid_argument("static_dispatch requires static mode");
  if (cfg.capacity_factor <= 0.0)
    throw std::invalid_argument("capacity factor must be positive in static mode");

  StaticDispatchPlan plan;
  plan.seq_len = batch.seq_len();
  plan.num_experts = cfg.num_experts;
  plan.top_k = cfg.top_k;
  plan.capacity = expert_capacity(cfg.capacity_factor, plan.seq_len);
  if (plan.capacity <= 0) throw std::invalid_argument("zero capacity");

  plan.slots = Eigen::MatrixXi::Constant(plan.num_experts, plan.capacity, kPlaceholder);
  std::vector<int> fill(plan.num_experts, 0);
  for (int t = 0; t < plan.seq_len; ++t) {
    for (int j = 0; j < plan.top_k; ++j) {
      const int e = batch.tokens[t].experts[j];
      if (fill[e] < plan.capacity)
        plan.slots(e, fill[e]++) = t * plan.top_k + j;
      else
        plan.dropped.emplace_back(t, e);
    }
  }
  return plan;
}

DynamicDispatchPlan dynamic_dispatch(const Batch& batch, const GatingConfig& cfg) {
  check_batch(batch, cfg);
  if (cfg.mode != GatingMode::kDynamic)
    throw std::invalid_argument("dynamic_dispatch requires dynamic mode");

  DynamicDispatchPlan plan;
  plan.seq_len = batch.seq_len();
  plan.num_experts = cfg.num_experts;
  plan.top_k = cfg.top_k;
  const int total = plan.seq_len * plan.top_k;

  // Argsort by expert id via one bincount pass and a stable scatter.
  plan.counts.assign(plan.num_experts, 0);
  for (const TokenAssignment& ta : batch.tokens)
    for (int e : ta.experts) ++plan.counts[e];

  plan.splits.resize(plan.num_experts + 1);
  plan.splits[0] = 0;
  std::partial_sum(plan.counts.begin(), plan.counts.end(), plan.splits.begin() + 1);

  plan.order.resize(total);
  std::vector<int> cursor(plan.splits.begin(), plan.splits.end() - 1);
  for (int t = 0; t < plan.seq_len; ++t)
    for (int j = 0; j < plan.top_k; ++j) {
      const int e = batch.tokens[t].experts[j];
      plan.order[cursor[e]++] = t * plan.top_k + j;
    }
  return plan;
}

WasteFactor waste_factor(int num_experts, double capacity_factor, int top_k) {
  if (num_experts <= 0 || capacity_factor <= 0.0 || top_k <= 0)
    throw std::invalid_argument("waste_factor requires positive inputs");
  return WasteFactor{num_experts * capacity_factor / top_k};
}

std::int64_t dispatch_mask_elements(int seq_len, int num_experts, double capacity_factor) {
  if (seq_len <= 0 || num_experts <= 0 || capacity_factor <= 0.0)
    throw std::invalid_argument("dispatch_mask_elements requires positive inputs");
  return static_cast<std::int64_t>(num_experts) * seq_len *
         expert_capacity(capacity_factor, seq_len);
}

DispatchCostCounts dispatch_cost_counts(const DynamicDispatchPlan& plan, int token_dim) {
  if (token_dim <= 0) throw std::invalid_argument("token_dim must be positive");
  const int total = plan.seq_len * plan.top_k;

  // Recover the pre-sort expert key of every slot from the plan's segments,
  // then measure a comparison-based stable argsort over them.
  std::vector<int> key(total);
  for (int e = 0; e < plan.num_experts; ++e)
    for (int pos = plan.splits[e]; pos < plan.splits[e + 1]; ++pos)
      key[plan.order[pos]] = e;

  std::vector<int> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  std::int64_t comparisons = 0;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    ++comparisons;
    return key[a] < key[b];
  });

  DispatchCostCounts counts;
  counts.comparisons = comparisons;
  counts.count_passes = total;
  counts.gather_elements = static_cast<std::int64_t>(total) * token_dim;
  return counts;
}

std::string debug_json(const StaticDispatchPlan& plan) {
  nlohmann::json slots = nlohmann::json::array();
  for (int e = 0; e < plan.num_experts; ++e) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < plan.capacity; ++c) row.push_back(plan.slots(e, c));
    slots.push_back(std::move(row));
  }
  nlohmann::json dropped = nlohmann::json::array();
  for (auto [t, e] : plan.dropped) dropped.push_back({t, e});
  const nlohmann::json j = {{"seq_len", plan.seq_len},
                            {"num_experts", plan.num_experts},
                            {"top_k", plan.top_k},
                            {"capacity", plan.capacity},
                            {"slots", std::move(slots)},
                            {"dropped", std::move(dropped)}};
  return j.dump();
}

std::string debug_json(const DynamicDispatchPlan& plan) {
  const nlohmann::json j = {{"seq_len", plan.seq_len},
                            {"num_experts", plan.num_experts},
                            {"top_k", plan.top_k},
                            {"order", plan.order},
                            {"counts", plan.counts},
                            {"splits", plan.splits}};
  return j.dump();
}

}  // namespace moesim
