#pragma once

#include <vector>

#include <Eigen/Core>

#include "moesim/trace.hpp"

namespace moesim {

/// Expert-to-device assignment with exactly E/D experts per device.
struct Placement {
  std::vector<int> device_of;  // size num_experts, values in [0, num_devices)
  int num_devices = 1;

  int num_experts() const { return static_cast<int>(device_of.size()); }
  int experts_per_device() const { return num_experts() / num_devices; }

  /// E x D 0/1 matrix view of the assignment.
  Eigen::MatrixXd matrix() const;
};

/// Throws std::invalid_argument unless every expert sits on exactly one
/// device and every device holds exactly E/D experts.
void validate(const Placement& placement);

/// Pairwise Pearson correlation between per-expert load series. Experts with
/// zero variance correlate 0 with everything, themselves included, so
/// never-active experts stay placeable.
struct CorrMatrix {
  Eigen::MatrixXd corr;  // num_experts x num_experts, symmetric, in [-1, 1]
};

struct BalanceReport {
  Eigen::MatrixXd device_load;  // num_devices x num_batches, columns sum to 1
  double max_load = 0.0;        // max over devices and batches
  double avg_max_load = 0.0;    // per-batch max, averaged over batches
  double objective = 0.0;       // max |load - 1/D|
};

/// Baseline placement: expert m on device floor(m / (E/D)).
Placement contiguous_place(int num_experts, int num_devices);

/// Requires at least two batches of history.
CorrMatrix pearson_corr(const LoadMatrix& history);

/// Sorts experts by mean historical load descending (ties: lower id) and
/// assigns each to the open device with the smallest accumulated mean load
/// (ties: lower device id); a device closes once it holds E/D experts.
Placement greedy_place(const LoadMatrix& history, int num_devices);

/// Greedy loop with a correlation penalty: candidate expert a scores device n
/// as sum over experts m already on n of (mean_load[m] + weight * corr(a, m)).
Placement anticorr_place(const LoadMatrix& history, int num_devices, double weight = 0.5);
Placement anticorr_place(const LoadMatrix& history, const CorrMatrix& corr,
                         int num_devices, double weight = 0.5);

BalanceReport eval_balance(const Placement& placement, const LoadMatrix& test);

void save_placement_csv(const Placement& placement, const std::filesystem::path& path);
Placement load_placement_csv(const std::filesystem::path& path);

}  // namespace moesim
