#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "moesim/balance.hpp"
#include "moesim/trace.hpp"

namespace moesim {

enum class CachePolicy { kLifo, kFifo, kMin };

const char* to_string(CachePolicy policy);
CachePolicy cache_policy_from_string(const std::string& name);

struct CacheConfig {
  int cache_size = 1;  // experts held in fast memory per device
  CachePolicy policy = CachePolicy::kLifo;
  double expert_bytes = 0.0;
  double cpu_gpu_bandwidth = 12e9;  // observed PCIe saturation point
};

/// Per-device cache of expert parameters. `insertion_order` holds the
/// resident ids oldest-first, serving as both the LIFO stack (back) and the
/// FIFO queue (front).
struct CacheState {
  std::vector<int> insertion_order;
  std::int64_t hits = 0;
  std::int64_t misses = 0;
  std::int64_t evictions = 0;

  bool resident(int expert) const;
  int size() const { return static_cast<int>(insertion_order.size()); }
};

struct BatchCacheStats {
  int accesses = 0;
  int hits = 0;
  int misses = 0;
  int evictions = 0;
};

/// Runs one batch of accesses: the active experts are touched serially in
/// increasing id order. A miss inserts the expert, evicting when full:
///   LIFO/FIFO: first any resident inactive in this batch (most recently
///   inserted one), otherwise the most recently / earliest inserted resident.
///   MIN: the resident with the farthest next use in the remainder of this
///   batch followed by `future` (never used again first, ties lowest id).
/// `future` is the flattened access sequence of all later batches; required
/// iff policy is MIN (an empty span is valid for the last batch).
BatchCacheStats access_batch(CacheState& state, std::vector<int> active,
                             const CacheConfig& cfg,
                             std::optional<std::span<const int>> future = std::nullopt);

struct MissReport {
  std::vector<int> batch_accesses;
  std::vector<int> batch_misses;
  std::int64_t accesses = 0;
  std::int64_t hits = 0;
  std::int64_t misses = 0;
  std::int64_t evictions = 0;
  double miss_rate = 0.0;             // misses / accesses
  double worst_batch_miss_rate = 0.0;
  double transfer_seconds = 0.0;
};

struct CacheSimResult {
  std::vector<MissReport> per_device;
  MissReport global;  // aggregated by total accesses across devices
};

/// Cold-start simulation over the whole trace: per device and batch, the
/// active set is every expert placed there with a positive load share.
CacheSimResult run_cache_sim(const LoadMatrix& loads, const Placement& placement,
                             const CacheConfig& cfg);

/// misses * expert_bytes / cpu_gpu_bandwidth.
double transfer_time(std::int64_t misses, const CacheConfig& cfg);

struct SweepRow {
  int cache_size = 0;
  CachePolicy policy = CachePolicy::kLifo;
  int device = 0;
  double miss_rate = 0.0;
  double worst_batch_miss_rate = 0.0;
  double transfer_seconds = 0.0;
};

std::vector<SweepRow> cache_sweep(const LoadMatrix& loads, const Placement& placement,
                                  const std::vector<int>& sizes,
                                  const std::vector<CachePolicy>& policies,
                                  const CacheConfig& base_cfg);

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace moesim
