#include "moesim/buffer.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "moesim/csv.hpp"

namespace moesim {

namespace {

constexpr std::int64_t kNeverUsed = std::numeric_limits<std::int64_t>::max();

void check_config(const CacheConfig& cfg) {
  if (cfg.cache_size < 1) throw std::invalid_argument("cache_size must be >= 1");
  if (cfg.expert_bytes < 0.0) throw std::invalid_argument("expert_bytes must be >= 0");
  if (cfg.cpu_gpu_bandwidth <= 0.0)
    throw std::invalid_argument("cpu_gpu_bandwidth must be positive");
}

void finalize(MissReport& report) {
  report.miss_rate =
      report.accesses > 0 ? static_cast<double>(report.misses) / report.accesses : 0.0;
  report.worst_batch_miss_rate = 0.0;
  for (std::size_t b = 0; b < report.batch_accesses.size(); ++b)
    if (report.batch_accesses[b] > 0)
      report.worst_batch_miss_rate =
          std::max(report.worst_batch_miss_rate,
                   static_cast<double>(report.batch_misses[b]) / report.batch_accesses[b]);
}

}  // namespace

const char* to_string(CachePolicy policy) {
  switch (policy) {
    case CachePolicy::kLifo: return "LIFO";
    case CachePolicy::kFifo: return "FIFO";
    case CachePolicy::kMin: return "MIN";
  }
  return "?";
}

CachePolicy cache_policy_from_string(const std::string& name) {
  if (name == "LIFO" || name == "lifo") return CachePolicy::kLifo;
  if (name == "FIFO" || name == "fifo") return CachePolicy::kFifo;
  if (name == "MIN" || name == "min") return CachePolicy::kMin;
  throw std::invalid_argument("unknown cache policy: " + name);
}

bool CacheState::resident(int expert) const {
  return std::find(insertion_order.begin(), insertion_order.end(), expert) !=
         insertion_order.end();
}

BatchCacheStats access_batch(CacheState& state, std::vector<int> active,
                             const CacheConfig& cfg,
                             std::optional<std::span<const int>> future) {
  check_config(cfg);
  if (cfg.policy == CachePolicy::kMin && !future)
    throw std::invalid_argument("MIN policy requires the future access sequence");

  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());

  // First position of each expert in the post-batch stream, for MIN.
  std::unordered_map<int, std::int64_t> future_first;
  if (cfg.policy == CachePolicy::kMin) {
    for (std::int64_t i = static_cast<std::int64_t>(future->size()) - 1; i >= 0; --i)
      future_first[(*future)[i]] = i;
  }

  BatchCacheStats stats;
  for (std::size_t ai = 0; ai < active.size(); ++ai) {
    const int x = active[ai];
    ++stats.accesses;
    if (state.resident(x)) {
      ++stats.hits;
      continue;
    }
    ++stats.misses;
    if (state.size() == cfg.cache_size) {
      int victim = -1;
      if (cfg.policy == CachePolicy::kMin) {
        // Farthest next use across the rest of this batch, then the future
        // stream; never-used-again evicts first, ties break to lowest id.
        std::int64_t best = -1;
        for (int r : state.insertion_order) {
          std::int64_t dist;
          const auto it = std::lower_bound(active.begin() + ai + 1, active.end(), r);
          if (it != active.end() && *it == r) {
            dist = it - (active.begin() + ai + 1);
          } else {
            const auto fit = future_first.find(r);
            dist = fit == future_first.end()
                       ? kNeverUsed
                       : static_cast<std::int64_t>(active.size() - ai - 1) + fit->second;
          }
          if (dist > best || (dist == best && r < victim)) {
            best = dist;
            victim = r;
          }
        }
      } else {
        // Inactive residents go first (most recently inserted one); among
        // all-active residents LIFO takes the newest, FIFO the oldest.
        for (auto it = state.insertion_order.rbegin();
             it != state.insertion_order.rend(); ++it) {
          if (!std::binary_search(active.begin(), active.end(), *it)) {
            victim = *it;
            break;
          }
        }
        if (victim < 0)
          victim = cfg.policy == CachePolicy::kLifo ? state.insertion_order.back()
                                                    : state.insertion_order.front();
      }
      state.insertion_order.erase(std::find(state.insertion_order.begin(),
                                            state.insertion_order.end(), victim));
      ++stats.evictions;
    }
    state.insertion_order.push_back(x);
  }

  state.hits += stats.hits;
  state.misses += stats.misses;
  state.evictions += stats.evictions;
  return stats;
}

CacheSimResult run_cache_sim(const LoadMatrix& loads, const Placement& placement,
                             const CacheConfig& cfg) {
  check_config(cfg);
  validate(placement);
  if (placement.num_experts() != loads.num_experts())
    throw std::invalid_argument("placement/load matrix expert count mismatch");

  const int D = placement.num_devices;
  const int B = static_cast<int>(loads.num_batches());

  CacheSimResult result;
  result.per_device.resize(D);
  result.global.batch_accesses.assign(B, 0);
  result.global.batch_misses.assign(B, 0);

  for (int d = 0; d < D; ++d) {
    // Active sets per batch: this device's experts with a positive share,
    // visited in increasing id order.
    std::vector<std::vector<int>> active(B);
    for (int e = 0; e < placement.num_experts(); ++e) {
      if (placement.device_of[e] != d) continue;
      for (int b = 0; b < B; ++b)
        if (loads.share(e, b) > 0.0) active[b].push_back(e);
    }

    std::vector<int> stream;
    std::vector<std::size_t> batch_start(B + 1, 0);
    if (cfg.policy == CachePolicy::kMin) {
      for (int b = 0; b < B; ++b) {
        stream.insert(stream.end(), active[b].begin(), active[b].end());
        batch_start[b + 1] = stream.size();
      }
    }

    CacheState state;
    MissReport& report = result.per_device[d];
    report.batch_accesses.resize(B);
    report.batch_misses.resize(B);
    for (int b = 0; b < B; ++b) {
      std::optional<std::span<const int>> future;
      if (cfg.policy == CachePolicy::kMin)
        future = std::span<const int>(stream).subspan(batch_start[b + 1]);
      const BatchCacheStats stats = access_batch(state, active[b], cfg, future);
      report.batch_accesses[b] = stats.accesses;
      report.batch_misses[b] = stats.misses;
      result.global.batch_accesses[b] += stats.accesses;
      result.global.batch_misses[b] += stats.misses;
    }
    report.accesses = state.hits + state.misses;
    report.hits = state.hits;
    report.misses = state.misses;
    report.evictions = state.evictions;
    report.transfer_seconds = transfer_time(report.misses, cfg);
    finalize(report);

    result.global.accesses += report.accesses;
    result.global.hits += report.hits;
    result.global.misses += report.misses;
    result.global.evictions += report.evictions;
  }
  result.global.transfer_seconds = transfer_time(result.global.misses, cfg);
  finalize(result.global);
  return result;
}

double transfer_time(std::int64_t misses, const CacheConfig& cfg) {
  if (misses < 0) throw std::invalid_argument("miss count must be nonnegative");
  check_config(cfg);
  return static_cast<double>(misses) * cfg.expert_bytes / cfg.cpu_gpu_bandwidth;
}

std::vector<SweepRow> cache_sweep(const LoadMatrix& loads, const Placement& placement,
                                  const std::vector<int>& sizes,
                                  const std::vector<CachePolicy>& policies,
                                  const CacheConfig& base_cfg) {
  std::vector<SweepRow> rows;
  for (int size : sizes) {
    if (size < 1) throw std::invalid_argument("cache sizes must be positive");
    for (CachePolicy policy : policies) {
      CacheConfig cfg = base_cfg;
      cfg.cache_size = size;
      cfg.policy = policy;
      const CacheSimResult sim = run_cache_sim(loads, placement, cfg);
      for (int d = 0; d < placement.num_devices; ++d) {
        const MissReport& r = sim.per_device[d];
        rows.push_back(SweepRow{size, policy, d, r.miss_rate, r.worst_batch_miss_rate,
                                r.transfer_seconds});
      }
    }
  }
  return rows;
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.row("size", "policy", "device", "miss_rate", "worst_batch_miss_rate",
          "transfer_seconds");
  for (const SweepRow& r : rows)
    csv.row(r.cache_size, to_string(r.policy), r.device, r.miss_rate,
            r.worst_batch_miss_rate, r.transfer_seconds);
}

}  // namespace moesim
