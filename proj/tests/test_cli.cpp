#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>

#include "test_util.hpp"

using moesim::test::TempDir;
using moesim::test::read_file;
using moesim::test::write_file;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MOESIM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string gen_args(const TempDir& dir, int seed) {
  return "gen-trace --experts 16 --topk 2 --batches 6 --seqlen 32 --zipf 1.0 "
         "--persist 0.8 --active-frac 0.5 --seed " +
         std::to_string(seed) + " --out " + dir.path.string();
}

}  // namespace

TEST_CASE("gen-trace writes the requested number of batch lines") {
  TempDir dir("cli_gen");
  REQUIRE(run_cli(gen_args(dir, 7)) == 0);
  const std::string text = read_file(dir.path / "trace.jsonl");
  int lines = 0;
  for (char c : text) lines += (c == '\n');
  CHECK(lines == 1 + 6);  // header + one line per batch
  CHECK(std::filesystem::exists(dir.path / "manifest.json"));
}

TEST_CASE("gen-trace is byte-identical for a fixed seed") {
  TempDir a("cli_gen_a"), b("cli_gen_b");
  REQUIRE(run_cli(gen_args(a, 99)) == 0);
  REQUIRE(run_cli(gen_args(b, 99)) == 0);
  CHECK(read_file(a.path / "trace.jsonl") == read_file(b.path / "trace.jsonl"));

  TempDir c("cli_gen_c");
  REQUIRE(run_cli(gen_args(c, 100)) == 0);
  CHECK(read_file(a.path / "trace.jsonl") != read_file(c.path / "trace.jsonl"));
}

TEST_CASE("stats reports the forced sparsity of a thin active fraction") {
  TempDir dir("cli_stats");
  REQUIRE(run_cli("gen-trace --experts 16 --topk 1 --batches 4 --seqlen 64 "
                  "--active-frac 0.25 --seed 3 --out " +
                  dir.path.string()) == 0);
  REQUIRE(run_cli("stats --trace " + (dir.path / "trace.jsonl").string() + " --out " +
                  dir.path.string()) == 0);
  const std::string stats = read_file(dir.path / "stats.csv");
  CHECK(stats.find("batch,inactive_experts,inactive_fraction,top_share") == 0);
  // 4 active of 16 -> at least 12 inactive every batch
  std::istringstream ss(stats);
  std::string line;
  std::getline(ss, line);
  for (int b = 0; b < 4; ++b) {
    REQUIRE(std::getline(ss, line));
    const auto first_comma = line.find(',');
    const auto second_comma = line.find(',', first_comma + 1);
    const int inactive =
        std::stoi(line.substr(first_comma + 1, second_comma - first_comma - 1));
    CHECK(inactive >= 12);
  }
  CHECK(read_file(dir.path / "loads.csv").rfind("expert,b0,b1,b2,b3", 0) == 0);
}

TEST_CASE("simulate emits the full report set with a consistent summary") {
  TempDir dir("cli_sim");
  const std::string config = R"({
    "synthetic": {"num_experts": 16, "top_k": 2, "num_batches": 4, "seq_len": 64,
                  "zipf_skew": 1.0, "persistence": 0.8, "active_fraction": 1.0},
    "gating": {"num_experts": 16, "top_k": 2, "capacity_factor": 0.5, "mode": "both"},
    "topology": {"num_devices": 4, "token_bytes": 64},
    "cache": {"cache_size": 2, "policy": "LIFO", "expert_bytes": 1e6},
    "balance_policy": "greedy",
    "seed": 11
  })";
  write_file(dir.path / "config.json", config);
  REQUIRE(run_cli("simulate --config " + (dir.path / "config.json").string() + " --out " +
                  dir.path.string()) == 0);

  for (const char* name :
       {"latency.csv", "memory.csv", "comm.csv", "cache.csv", "summary.csv",
        "manifest.json"})
    CHECK(std::filesystem::exists(dir.path / name));

  const std::string summary = read_file(dir.path / "summary.csv");
  CHECK(summary.find("waste_factor,4\n") != std::string::npos);  // 16*0.5/2
  CHECK(summary.find("throughput_static,") != std::string::npos);
  CHECK(summary.find("throughput_dynamic,") != std::string::npos);
}

TEST_CASE("simulate reports the waste factor of paper-scale shapes") {
  SUBCASE("LM shape: 512 experts at capacity factor 0.05, top-2") {
    TempDir dir("cli_lm");
    const std::string config = R"({
      "synthetic": {"num_experts": 512, "top_k": 2, "num_batches": 2, "seq_len": 64},
      "gating": {"num_experts": 512, "top_k": 2, "capacity_factor": 0.05, "mode": "both"},
      "topology": {"num_devices": 8, "token_bytes": 64},
      "seed": 1
    })";
    write_file(dir.path / "config.json", config);
    REQUIRE(run_cli("simulate --config " + (dir.path / "config.json").string() +
                    " --out " + dir.path.string()) == 0);
    CHECK(read_file(dir.path / "summary.csv").find("waste_factor,12.8\n") !=
          std::string::npos);
  }
  SUBCASE("MT shape: 128 experts at capacity factor 1, top-2") {
    TempDir dir("cli_mt");
    const std::string config = R"({
      "synthetic": {"num_experts": 128, "top_k": 2, "num_batches": 2, "seq_len": 64},
      "gating": {"num_experts": 128, "top_k": 2, "capacity_factor": 1.0, "mode": "both"},
      "topology": {"num_devices": 8, "token_bytes": 64},
      "seed": 1
    })";
    write_file(dir.path / "config.json", config);
    REQUIRE(run_cli("simulate --config " + (dir.path / "config.json").string() +
                    " --out " + dir.path.string()) == 0);
    CHECK(read_file(dir.path / "summary.csv").find("waste_factor,64\n") !=
          std::string::npos);
  }
}

TEST_CASE("simulate omits cache.csv without a cache section") {
  TempDir dir("cli_sim_nc");
  const std::string config = R"({
    "synthetic": {"num_experts": 8, "top_k": 1, "num_batches": 2, "seq_len": 16},
    "gating": {"num_experts": 8, "top_k": 1, "capacity_factor": 1.0, "mode": "dynamic"},
    "topology": {"num_devices": 2, "token_bytes": 16}
  })";
  write_file(dir.path / "config.json", config);
  REQUIRE(run_cli("simulate --config " + (dir.path / "config.json").string() + " --out " +
                  dir.path.string()) == 0);
  CHECK_FALSE(std::filesystem::exists(dir.path / "cache.csv"));
  CHECK(std::filesystem::exists(dir.path / "summary.csv"));
}

TEST_CASE("simulate rejects inconsistent expert counts naming the field") {
  TempDir dir("cli_sim_bad");
  const std::string config = R"({
    "synthetic": {"num_experts": 8, "top_k": 1, "num_batches": 2, "seq_len": 16},
    "gating": {"num_experts": 16, "top_k": 1, "capacity_factor": 1.0},
    "topology": {"num_devices": 2, "token_bytes": 16}
  })";
  write_file(dir.path / "config.json", config);
  CHECK(run_cli("simulate --config " + (dir.path / "config.json").string() + " --out " +
                dir.path.string()) != 0);
}

TEST_CASE("balance compares the policy against the contiguous baseline") {
  TempDir dir("cli_bal");
  REQUIRE(run_cli("gen-trace --experts 16 --topk 1 --batches 8 --seqlen 64 --zipf 1.2 "
                  "--persist 0.9 --seed 13 --out " +
                  dir.path.string()) == 0);
  REQUIRE(run_cli("balance --trace " + (dir.path / "trace.jsonl").string() +
                  " --devices 4 --policy greedy --split 0.5 --out " + dir.path.string()) ==
          0);
  const std::string balance = read_file(dir.path / "balance.csv");
  CHECK(balance.rfind("batch,device,load", 0) == 0);
  CHECK(balance.find("greedy_max_load,") != std::string::npos);
  CHECK(balance.find("contiguous_max_load,") != std::string::npos);
  const std::string placement = read_file(dir.path / "placement.csv");
  CHECK(placement.rfind("expert,device", 0) == 0);
}

TEST_CASE("balance policy contiguous reproduces the block mapping") {
  TempDir dir("cli_bal_c");
  REQUIRE(run_cli("gen-trace --experts 8 --topk 1 --batches 4 --seqlen 16 --seed 1 "
                  "--out " +
                  dir.path.string()) == 0);
  REQUIRE(run_cli("balance --trace " + (dir.path / "trace.jsonl").string() +
                  " --devices 2 --policy contiguous --out " + dir.path.string()) == 0);
  CHECK(read_file(dir.path / "placement.csv") ==
        "expert,device\n0,0\n1,0\n2,0\n3,0\n4,1\n5,1\n6,1\n7,1\n");
}

TEST_CASE("balance rejects anticorr on a single batch") {
  TempDir dir("cli_bal_1");
  REQUIRE(run_cli("gen-trace --experts 8 --topk 1 --batches 2 --seqlen 16 --seed 1 "
                  "--out " +
                  dir.path.string()) == 0);
  // split 0.5 of 2 batches leaves 1 batch of history: anticorr needs 2
  CHECK(run_cli("balance --trace " + (dir.path / "trace.jsonl").string() +
                " --devices 2 --policy anticorr --split 0.5 --out " + dir.path.string()) !=
        0);
}

TEST_CASE("cache-sweep writes one row per size, policy and device") {
  TempDir dir("cli_sweep");
  REQUIRE(run_cli("gen-trace --experts 8 --topk 1 --batches 6 --seqlen 32 "
                  "--active-frac 0.5 --persist 0.8 --seed 5 --out " +
                  dir.path.string()) == 0);
  REQUIRE(run_cli("cache-sweep --trace " + (dir.path / "trace.jsonl").string() +
                  " --devices 2 --sizes 1-4 --policies LIFO,FIFO,MIN --out " +
                  dir.path.string()) == 0);
  const std::string sweep = read_file(dir.path / "cache_sweep.csv");
  CHECK(sweep.rfind("size,policy,device,miss_rate,worst_batch_miss_rate,transfer_seconds",
                    0) == 0);
  int lines = 0;
  for (char c : sweep) lines += (c == '\n');
  CHECK(lines == 1 + 4 * 3 * 2);
}

TEST_CASE("missing trace file fails with a nonzero exit") {
  TempDir dir("cli_missing");
  CHECK(run_cli("stats --trace " + (dir.path / "nope.jsonl").string() + " --out " +
                dir.path.string()) != 0);
}
