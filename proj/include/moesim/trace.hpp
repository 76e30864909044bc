#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace moesim {

/// One token's routing decision: k distinct expert ids with gate weights
/// that sum to 1.
struct TokenAssignment {
  std::vector<int> experts;
  std::vector<double> weights;
};

struct Batch {
  std::int64_t batch_id = 0;
  std::vector<TokenAssignment> tokens;

  int seq_len() const { return static_cast<int>(tokens.size()); }
};

/// A routing trace: the workload driving every simulation. Immutable after
/// construction/validation.
struct TokenTrace {
  int num_experts = 0;
  int top_k = 0;
  std::vector<Batch> batches;

  int num_batches() const { return static_cast<int>(batches.size()); }
};

/// Expert-by-batch matrix of load shares. Entry (m, b) is the fraction of
/// batch b's assignment slots (k * seq_len of them) routed to expert m, so
/// every column sums to 1 regardless of top-k.
struct LoadMatrix {
  Eigen::MatrixXd share;  // num_experts x num_batches

  Eigen::Index num_experts() const { return share.rows(); }
  Eigen::Index num_batches() const { return share.cols(); }
};

/// Parameters of the synthetic workload generator. Per batch, Zipf(skew)
/// popularity mass is spread over a random subset of ceil(active_fraction*E)
/// experts; with probability `persistence` the subset and its ranking carry
/// over to the next batch. Tokens draw k distinct experts proportional to
/// popularity.
struct SyntheticSpec {
  int num_experts = 0;
  int top_k = 1;
  int num_batches = 1;
  int seq_len = 1;
  double zipf_skew = 0.0;        // >= 0; 0 = uniform over the active set
  double persistence = 0.0;      // in [0, 1]
  double active_fraction = 1.0;  // in (0, 1]
  std::uint64_t seed = 0;
};

struct SparsityReport {
  std::vector<int> inactive_per_batch;       // experts with zero load, per batch
  std::vector<double> top_share_per_batch;   // largest single-expert share
  Eigen::VectorXd mean_load;                 // per-expert mean over batches
  double mean_inactive_fraction = 0.0;
  double max_inactive_fraction = 0.0;
  int never_active = 0;  // experts with zero load in every batch
};

/// Throws std::runtime_error (parse) or std::invalid_argument (invariant)
/// with the offending line/batch/token named in the message.
TokenTrace load_token_trace(const std::filesystem::path& path);

/// JSON Lines, one header line then one line per batch. Deterministic byte
/// output for a given trace.
void save_token_trace(const TokenTrace& trace, const std::filesystem::path& path);

/// Checks every trace invariant; throws std::invalid_argument naming the
/// batch/token coordinates of the first violation.
void validate(const TokenTrace& trace);

LoadMatrix aggregate_loads(const TokenTrace& trace);

/// Deterministic for a fixed spec (including seed).
TokenTrace gen_synthetic_trace(const SyntheticSpec& spec);

/// Splits batch columns at floor(fraction * B): [0, cut) and [cut, B).
/// Throws if either part would be empty.
std::pair<LoadMatrix, LoadMatrix> split_trace(const LoadMatrix& loads, double fraction);

SparsityReport sparsity_stats(const LoadMatrix& loads);

/// CSV with header "expert,b0,b1,...", one row per expert.
void save_load_matrix_csv(const LoadMatrix& loads, const std::filesystem::path& path);

}  // namespace moesim
