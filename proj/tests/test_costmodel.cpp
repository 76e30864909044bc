#include "moesim/costmodel.hpp"

#include <doctest.h>

#include "test_util.hpp"

using namespace moesim;

namespace {

GatingConfig static_cfg(int E, int k, double C) {
  return GatingConfig{E, k, C, GatingMode::kStatic};
}

GatingConfig dynamic_cfg(int E, int k) {
  return GatingConfig{E, k, 0.0, GatingMode::kDynamic};
}

Batch uniform_batch(int S, int E, int k) {
  Batch batch;
  for (int t = 0; t < S; ++t) {
    TokenAssignment ta;
    for (int j = 0; j < k; ++j) ta.experts.push_back((t + j) % E);
    ta.weights.assign(k, 1.0 / k);
    batch.tokens.push_back(std::move(ta));
  }
  return batch;
}

CommReport empty_comm() { return CommReport{}; }

}  // namespace

TEST_CASE("latency composes gate, reorder and compute with no comm") {
  const int E = 4, k = 1, S = 8;
  const Batch batch = uniform_batch(S, E, k);
  const Placement placement = contiguous_place(E, 1);
  ComputeParams params;
  params.gate_overhead_seconds = 0.25;
  params.reorder_seconds_per_element = 0.0;
  params.per_assignment_seconds = 0.125;

  const DynamicDispatchPlan plan = dynamic_dispatch(batch, dynamic_cfg(E, k));
  const LatencyBreakdown lb = model_latency(plan, placement, empty_comm(), params);
  CHECK(lb.total == doctest::Approx(0.25 + 0.125 * S));
  CHECK(lb.expert_compute == doctest::Approx(0.125 * S));
  CHECK(lb.a2a_size == 0.0);
  CHECK(lb.cpu_gpu_transfer == 0.0);
}

TEST_CASE("static over dynamic compute ratio equals the waste factor") {
  for (auto [E, D, k, S, C] :
       {std::tuple{16, 4, 2, 2048, 0.5}, std::tuple{8, 2, 1, 1024, 0.25},
        std::tuple{32, 8, 2, 4096, 0.125}}) {
    const Batch batch = uniform_batch(S, E, k);
    const Placement placement = contiguous_place(E, D);
    ComputeParams params;
    params.gate_overhead_seconds = 0.0;
    params.reorder_seconds_per_element = 0.0;

    const LatencyBreakdown sta = model_latency(
        static_dispatch(batch, static_cfg(E, k, C)), placement, empty_comm(), params);
    const LatencyBreakdown dyn = model_latency(
        dynamic_dispatch(batch, dynamic_cfg(E, k)), placement, empty_comm(), params);
    CHECK(sta.expert_compute / dyn.expert_compute ==
          doctest::Approx(waste_factor(E, C, k).value).epsilon(0.02));
  }
}

TEST_CASE("transfer fully hidden under the payload exchange adds nothing") {
  const int E = 4, k = 1, S = 8;
  const Batch batch = uniform_batch(S, E, k);
  const Placement placement = contiguous_place(E, 2);
  ComputeParams params;
  params.gate_overhead_seconds = 0.0;
  params.reorder_seconds_per_element = 0.0;
  params.per_assignment_seconds = 0.0;

  CommReport comm;
  comm.phases.push_back({"payload", 800, 200, 0.2});
  comm.total_seconds = 0.2;
  const DynamicDispatchPlan plan = dynamic_dispatch(batch, dynamic_cfg(E, k));

  const LatencyBreakdown hidden = model_latency(plan, placement, comm, params, 0.1);
  CHECK(hidden.total == doctest::Approx(0.2));
  const LatencyBreakdown partial = model_latency(plan, placement, comm, params, 0.5);
  CHECK(partial.total == doctest::Approx(0.5));  // 0.2 + (0.5 - 0.2) overlap excess
}

TEST_CASE("latency total always matches the composition formula") {
  std::mt19937_64 rng(8);
  for (int iter = 0; iter < 50; ++iter) {
    const int D = 1 + static_cast<int>(rng() % 4);
    const int E = D * (1 + static_cast<int>(rng() % 4));
    const int k = 1 + static_cast<int>(rng() % 2);
    const int S = 1 + static_cast<int>(rng() % 64);
    if (k > E) continue;
    const Batch batch = test::random_batch(rng, S, E, k);
    const Placement placement = contiguous_place(E, D);
    ComputeParams params;

    CommReport comm;
    comm.phases.push_back({"size", 64, 16, (rng() % 100) / 1000.0});
    comm.phases.push_back({"payload", 4096, 1024, (rng() % 100) / 1000.0});
    const double transfer = (rng() % 100) / 500.0;
    const LatencyBreakdown lb = model_latency(dynamic_dispatch(batch, dynamic_cfg(E, k)),
                                              placement, comm, params, transfer);
    CHECK(lb.gate >= 0.0);
    CHECK(lb.reorder >= 0.0);
    CHECK(lb.expert_compute >= 0.0);
    CHECK(lb.total == doctest::Approx(lb.gate + std::max(lb.reorder, lb.a2a_size) +
                                      lb.a2a_payload + lb.expert_compute +
                                      std::max(0.0, lb.cpu_gpu_transfer - lb.a2a_payload)));
  }
}

TEST_CASE("memory model shapes") {
  const Topology topo = make_topology(512, 8, 2048, 4);
  ComputeParams params;
  params.token_dim = 1024;
  params.element_bytes = 2;
  params.expert_bytes = 100e6;
  params.non_expert_bytes = 2e9;

  SUBCASE("static-mode reordered buffer dwarfs the dynamic token buffer") {
    const MemoryBreakdown sta = model_memory(static_cfg(512, 2, 0.05), 2048, topo, params);
    const MemoryBreakdown dyn = model_memory(dynamic_cfg(512, 2), 2048, topo, params);
    const double reordered = 512.0 * 103 * 1024 * 2;
    const double token_buffer = 2.0 * 2048 * 1024 * 2;
    // mask bytes on top of the reordered buffer
    CHECK(sta.dynamic_bytes ==
          doctest::Approx(dispatch_mask_elements(2048, 512, 0.05) * 2.0 + reordered));
    CHECK(reordered / token_buffer == doctest::Approx(12.8).epsilon(0.01));
    CHECK(sta.dynamic_bytes > dyn.dynamic_bytes);
  }

  SUBCASE("waste factor 1 equalizes the reordered and token buffers") {
    // E*C = k so provisioned slots = real assignments
    const int E = 8, k = 1, S = 64;
    const double C = 1.0 / 8.0;
    const Topology small = make_topology(E, 2, 16, 4);
    const MemoryBreakdown sta = model_memory(static_cfg(E, k, C), S, small, params);
    const double reordered =
        static_cast<double>(E) * expert_capacity(C, S) * params.token_dim * 2;
    const double token_buffer = static_cast<double>(k) * S * params.token_dim * 2;
    CHECK(reordered == token_buffer);
    CHECK(sta.static_bytes == doctest::Approx(2e9 + 4 * 100e6));
  }

  SUBCASE("full cache equals the non-buffering static size") {
    CacheConfig cache;
    cache.cache_size = 64;  // experts per device for 512/8
    const MemoryBreakdown with = model_memory(dynamic_cfg(512, 2), 2048, topo, params, &cache);
    const MemoryBreakdown without = model_memory(dynamic_cfg(512, 2), 2048, topo, params);
    CHECK(with.static_bytes == without.static_bytes);

    cache.cache_size = 8;
    const MemoryBreakdown small = model_memory(dynamic_cfg(512, 2), 2048, topo, params, &cache);
    CHECK(small.static_bytes < without.static_bytes);
    CHECK(small.static_bytes == doctest::Approx(2e9 + 8 * 100e6));
  }

  SUBCASE("dynamic-mode dynamic memory ignores the capacity factor") {
    const MemoryBreakdown a = model_memory(dynamic_cfg(512, 2), 2048, topo, params);
    GatingConfig other = dynamic_cfg(512, 2);
    other.capacity_factor = 64.0;
    const MemoryBreakdown b = model_memory(other, 2048, topo, params);
    CHECK(a.dynamic_bytes == b.dynamic_bytes);
  }

  SUBCASE("static-mode memory is monotone in the capacity factor") {
    double prev = 0.0;
    for (double C : {0.05, 0.1, 0.5, 1.0, 2.0}) {
      const MemoryBreakdown mb = model_memory(static_cfg(512, 2, C), 2048, topo, params);
      CHECK(mb.dynamic_bytes >= prev);
      prev = mb.dynamic_bytes;
    }
  }
}

TEST_CASE("static-mode latency is monotone in the capacity factor") {
  const int E = 8, D = 2, k = 1, S = 64;
  const Batch batch = uniform_batch(S, E, k);
  const Placement placement = contiguous_place(E, D);
  const Topology topo = make_topology(E, D, 128, 4);
  ComputeParams params;
  double prev = 0.0;
  for (double C : {0.125, 0.25, 0.5, 1.0, 2.0}) {
    const StaticDispatchPlan plan = static_dispatch(batch, static_cfg(E, k, C));
    const CommReport comm =
        simulate_exchange(plan_static_exchange(plan, topo, placement), 1e9, 1e-6);
    const LatencyBreakdown lb = model_latency(plan, placement, comm, params);
    CHECK(lb.total >= prev);
    prev = lb.total;
  }
}

TEST_CASE("throughput is tokens over total") {
  LatencyBreakdown lb;
  lb.total = 1.0;
  CHECK(throughput(lb, 100) == doctest::Approx(100.0));
  lb.total = 0.5;
  CHECK(throughput(lb, 100) == doctest::Approx(200.0));
  lb.total = 0.0;
  CHECK_THROWS_AS(throughput(lb, 100), std::invalid_argument);
}

TEST_CASE("zero cache misses equalize buffering and non-buffering latency") {
  const int E = 8, k = 1, S = 32, D = 2;
  const Batch batch = uniform_batch(S, E, k);
  const Placement placement = contiguous_place(E, D);
  ComputeParams params;
  const DynamicDispatchPlan plan = dynamic_dispatch(batch, dynamic_cfg(E, k));
  const LatencyBreakdown without = model_latency(plan, placement, empty_comm(), params);
  const LatencyBreakdown with = model_latency(plan, placement, empty_comm(), params, 0.0);
  CHECK(with.total == without.total);
}
