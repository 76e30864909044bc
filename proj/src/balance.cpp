#include "moesim/balance.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "moesim/csv.hpp"

namespace moesim {

namespace {

void check_divisible(int num_experts, int num_devices) {
  if (num_devices < 1) throw std::invalid_argument("num_devices must be positive");
  if (num_experts < 1) throw std::invalid_argument("num_experts must be positive");
  if (num_experts % num_devices != 0)
    throw std::invalid_argument("num_experts must be divisible by num_devices");
}

// Experts sorted by mean load descending, lower id first on ties.
std::vector<int> descending_by_load(const Eigen::VectorXd& mean_load) {
  std::vector<int> order(mean_load.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (mean_load[a] != mean_load[b]) return mean_load[a] > mean_load[b];
    return a < b;
  });
  return order;
}

}  // namespace

Eigen::MatrixXd Placement::matrix() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(num_experts(), num_devices);
  for (int e = 0; e < num_experts(); ++e) m(e, device_of[e]) = 1.0;
  return m;
}

void validate(const Placement& placement) {
  check_divisible(placement.num_experts(), placement.num_devices);
  std::vector<int> count(placement.num_devices, 0);
  for (int e = 0; e < placement.num_experts(); ++e) {
    const int d = placement.device_of[e];
    if (d < 0 || d >= placement.num_devices)
      throw std::invalid_argument("expert " + std::to_string(e) + " has invalid device");
    ++count[d];
  }
  const int per = placement.experts_per_device();
  for (int d = 0; d < placement.num_devices; ++d)
    if (count[d] != per)
      throw std::invalid_argument("device " + std::to_string(d) + " holds " +
                                  std::to_string(count[d]) + " experts, expected " +
                                  std::to_string(per));
}

Placement contiguous_place(int num_experts, int num_devices) {
  check_divisible(num_experts, num_devices);
  Placement placement;
  placement.num_devices = num_devices;
  placement.device_of.resize(num_experts);
  const int per = num_experts / num_devices;
  for (int e = 0; e < num_experts; ++e) placement.device_of[e] = e / per;
  return placement;
}

CorrMatrix pearson_corr(const LoadMatrix& history) {
  const Eigen::Index E = history.num_experts();
  const Eigen::Index B = history.num_batches();
  if (B < 2) throw std::invalid_argument("pearson_corr requires at least 2 batches");

  Eigen::MatrixXd centered = history.share;
  centered.colwise() -= history.share.rowwise().mean().eval();
  const Eigen::VectorXd norm = centered.rowwise().norm();
  const Eigen::MatrixXd cross = centered * centered.transpose();

  CorrMatrix result;
  result.corr = Eigen::MatrixXd::Zero(E, E);
  for (Eigen::Index i = 0; i < E; ++i) {
    if (norm[i] == 0.0) continue;  // zero-variance series correlate 0
    for (Eigen::Index j = 0; j < E; ++j) {
      if (norm[j] == 0.0) continue;
      result.corr(i, j) = std::clamp(cross(i, j) / (norm[i] * norm[j]), -1.0, 1.0);
    }
    result.corr(i, i) = 1.0;
  }
  return result;
}

Placement greedy_place(const LoadMatrix& history, int num_devices) {
  const int E = static_cast<int>(history.num_experts());
  check_divisible(E, num_devices);
  const int per = E / num_devices;
  const Eigen::VectorXd mean_load = history.share.rowwise().mean();

  Placement placement;
  placement.num_devices = num_devices;
  placement.device_of.assign(E, -1);
  std::vector<double> device_load(num_devices, 0.0);
  std::vector<int> device_count(num_devices, 0);

  for (int e : descending_by_load(mean_load)) {
    int best = -1;
    for (int d = 0; d < num_devices; ++d) {
      if (device_count[d] >= per) continue;
      if (best < 0 || device_load[d] < device_load[best]) best = d;
    }
    placement.device_of[e] = best;
    device_load[best] += mean_load[e];
    ++device_count[best];
  }
  return placement;
}

Placement anticorr_place(const LoadMatrix& history, int num_devices, double weight) {
  return anticorr_place(history, pearson_corr(history), num_devices, weight);
}

Placement anticorr_place(const LoadMatrix& history, const CorrMatrix& corr,
                         int num_devices, double weight) {
  const int E = static_cast<int>(history.num_experts());
  check_divisible(E, num_devices);
  if (corr.corr.rows() != E || corr.corr.cols() != E)
    throw std::invalid_argument("correlation matrix dimension mismatch");
  const int per = E / num_devices;
  const Eigen::VectorXd mean_load = history.share.rowwise().mean();

  Placement placement;
  placement.num_devices = num_devices;
  placement.device_of.assign(E, -1);
  std::vector<std::vector<int>> members(num_devices);

  for (int a : descending_by_load(mean_load)) {
    int best = -1;
    double best_score = std::numeric_limits<double>::infinity();
    for (int d = 0; d < num_devices; ++d) {
      if (static_cast<int>(members[d].size()) >= per) continue;
      double score = 0.0;
      for (int m : members[d]) score += mean_load[m] + weight * corr.corr(a, m);
      if (score < best_score) {
        best_score = score;
        best = d;
      }
    }
    placement.device_of[a] = best;
    members[best].push_back(a);
  }
  return placement;
}

BalanceReport eval_balance(const Placement& placement, const LoadMatrix& test) {
  validate(placement);
  if (placement.num_experts() != test.num_experts())
    throw std::invalid_argument("placement/load matrix expert count mismatch");

  BalanceReport report;
  report.device_load = placement.matrix().transpose() * test.share;
  report.max_load = report.device_load.maxCoeff();
  report.avg_max_load = report.device_load.colwise().maxCoeff().mean();
  const double target = 1.0 / placement.num_devices;
  report.objective = (report.device_load.array() - target).abs().maxCoeff();
  return report;
}

void save_placement_csv(const Placement& placement, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.row("expert", "device");
  for (int e = 0; e < placement.num_experts(); ++e)
    csv.row(e, placement.device_of[e]);
}

Placement load_placement_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open placement file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("expert,device", 0) != 0)
    throw std::runtime_error(path.string() + ": missing expert,device header");

  std::vector<std::pair<int, int>> entries;
  int max_device = -1;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    int expert = -1, device = -1;
    char comma = 0;
    if (!(ss >> expert >> comma >> device) || comma != ',')
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": malformed placement row");
    entries.emplace_back(expert, device);
    max_device = std::max(max_device, device);
  }

  Placement placement;
  placement.num_devices = max_device + 1;
  placement.device_of.assign(entries.size(), -1);
  for (auto [expert, device] : entries) {
    if (expert < 0 || expert >= static_cast<int>(entries.size()))
      throw std::runtime_error(path.string() + ": expert id out of range");
    placement.device_of[expert] = device;
  }
  validate(placement);
  return placement;
}

}  // namespace moesim
