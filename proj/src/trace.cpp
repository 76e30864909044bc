#include "moesim/trace.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "moesim/csv.hpp"

namespace moesim {

using nlohmann::json;

namespace {

constexpr double kWeightSumTol = 1e-9;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string at_coords(int batch_id, int token) {
  std::ostringstream os;
  os << " (batch " << batch_id << ", token " << token << ")";
  return os.str();
}

// Uniform double in [0, 1) from the top 53 bits of the generator.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, n) via rejection, independent of stdlib
// distribution internals so traces are reproducible everywhere.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

void validate_token(const TokenAssignment& ta, int num_experts, int top_k,
                    int batch_id, int token) {
  if (static_cast<int>(ta.experts.size()) != top_k)
    fail("expected " + std::to_string(top_k) + " experts per token" + at_coords(batch_id, token));
  if (ta.weights.size() != ta.experts.size())
    fail("weights/experts length mismatch" + at_coords(batch_id, token));
  double sum = 0.0;
  for (std::size_t j = 0; j < ta.experts.size(); ++j) {
    const int e = ta.experts[j];
    if (e < 0 || e >= num_experts)
      fail("expert id " + std::to_string(e) + " out of range [0, " +
           std::to_string(num_experts) + ")" + at_coords(batch_id, token));
    for (std::size_t j2 = j + 1; j2 < ta.experts.size(); ++j2)
      if (ta.experts[j2] == e) fail("duplicate expert in top-k" + at_coords(batch_id, token));
    if (ta.weights[j] < 0.0)
      fail("negative gate weight" + at_coords(batch_id, token));
    sum += ta.weights[j];
  }
  if (std::abs(sum - 1.0) > kWeightSumTol)
    fail("weights do not sum to 1" + at_coords(batch_id, token));
}

}  // namespace

void validate(const TokenTrace& trace) {
  if (trace.num_experts < 1) fail("num_experts must be positive");
  if (trace.top_k < 1) fail("top_k must be positive");
  if (trace.top_k > trace.num_experts) fail("top_k exceeds num_experts");
  std::int64_t prev_id = -1;
  for (const Batch& batch : trace.batches) {
    if (batch.batch_id < 0) fail("negative batch_id " + std::to_string(batch.batch_id));
    if (batch.batch_id <= prev_id)
      fail("batch_ids not strictly increasing at batch " + std::to_string(batch.batch_id));
    prev_id = batch.batch_id;
    if (batch.tokens.empty())
      fail("batch " + std::to_string(batch.batch_id) + " has no tokens");
    for (int t = 0; t < batch.seq_len(); ++t)
      validate_token(batch.tokens[t], trace.num_experts, trace.top_k,
                     static_cast<int>(batch.batch_id), t);
  }
}

TokenTrace load_token_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());

  TokenTrace trace;
  std::string line;
  int lineno = 0;
  auto parse_line = [&](const std::string& text) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": parse error: " + e.what());
    }
  };

  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line);
    try {
      if (!have_header) {
        if (j.value("version", 0) != 1)
          throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                   ": unsupported trace version");
        trace.num_experts = j.at("num_experts").get<int>();
        trace.top_k = j.at("top_k").get<int>();
        have_header = true;
        continue;
      }
      Batch batch;
      batch.batch_id = j.at("batch_id").get<std::int64_t>();
      for (const json& jt : j.at("tokens")) {
        TokenAssignment ta;
        ta.experts = jt.at("e").get<std::vector<int>>();
        ta.weights = jt.at("w").get<std::vector<double>>();
        batch.tokens.push_back(std::move(ta));
      }
      trace.batches.push_back(std::move(batch));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": malformed record: " + e.what());
    }
  }
  if (!have_header)
    throw std::runtime_error(path.string() + ": empty trace (missing header line)");

  try {
    validate(trace);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return trace;
}

void save_token_trace(const TokenTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file: " + path.string());
  json header = {{"version", 1}, {"num_experts", trace.num_experts}, {"top_k", trace.top_k}};
  out << header.dump() << '\n';
  for (const Batch& batch : trace.batches) {
    json tokens = json::array();
    for (const TokenAssignment& ta : batch.tokens)
      tokens.push_back({{"e", ta.experts}, {"w", ta.weights}});
    json j = {{"batch_id", batch.batch_id}, {"tokens", std::move(tokens)}};
    out << j.dump() << '\n';
  }
}

LoadMatrix aggregate_loads(const TokenTrace& trace) {
  validate(trace);
  const int E = trace.num_experts;
  const int B = trace.num_batches();
  LoadMatrix loads;
  loads.share = Eigen::MatrixXd::Zero(E, B);
  for (int b = 0; b < B; ++b) {
    const Batch& batch = trace.batches[b];
    for (const TokenAssignment& ta : batch.tokens)
      for (int e : ta.experts) loads.share(e, b) += 1.0;
    loads.share.col(b) /= static_cast<double>(trace.top_k) * batch.seq_len();
  }
  return loads;
}

TokenTrace gen_synthetic_trace(const SyntheticSpec& spec) {
  if (spec.num_experts < 1) fail("num_experts must be positive");
  if (spec.top_k < 1) fail("top_k must be positive");
  if (spec.num_batches < 1) fail("num_batches must be positive");
  if (spec.seq_len < 1) fail("seq_len must be positive");
  if (spec.zipf_skew < 0.0) fail("zipf_skew must be >= 0");
  if (spec.persistence < 0.0 || spec.persistence > 1.0)
    fail("persistence must be in [0, 1]");
  if (spec.active_fraction <= 0.0 || spec.active_fraction > 1.0)
    fail("active_fraction must be in (0, 1]");

  const int E = spec.num_experts;
  const int active_count = static_cast<int>(std::ceil(spec.active_fraction * E));
  if (active_count < spec.top_k) fail("not enough active experts for top-k");

  std::mt19937_64 rng(spec.seed);

  // Popularity mass by rank: Zipf(skew) over the active slots.
  std::vector<double> rank_mass(active_count);
  for (int i = 0; i < active_count; ++i)
    rank_mass[i] = std::pow(static_cast<double>(i + 1), -spec.zipf_skew);
  const double total_mass = std::accumulate(rank_mass.begin(), rank_mass.end(), 0.0);

  std::vector<int> ids(E);
  std::iota(ids.begin(), ids.end(), 0);
  auto redraw_active = [&]() {
    // Partial Fisher-Yates: the first active_count entries become the ranked
    // active list.
    for (int i = 0; i < active_count; ++i) {
      const int j = i + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(E - i)));
      std::swap(ids[i], ids[j]);
    }
  };
  redraw_active();

  TokenTrace trace;
  trace.num_experts = E;
  trace.top_k = spec.top_k;
  trace.batches.reserve(spec.num_batches);

  std::vector<char> taken(active_count);
  for (int b = 0; b < spec.num_batches; ++b) {
    if (b > 0 && uniform01(rng) >= spec.persistence) redraw_active();

    Batch batch;
    batch.batch_id = b;
    batch.tokens.reserve(spec.seq_len);
    for (int t = 0; t < spec.seq_len; ++t) {
      TokenAssignment ta;
      std::fill(taken.begin(), taken.end(), 0);
      double remaining = total_mass;
      for (int j = 0; j < spec.top_k; ++j) {
        const double r = uniform01(rng) * remaining;
        double acc = 0.0;
        int chosen = -1;
        for (int i = 0; i < active_count; ++i) {
          if (taken[i]) continue;
          acc += rank_mass[i];
          if (r < acc) {
            chosen = i;
            break;
          }
        }
        if (chosen < 0) {  // float roundoff: take the last free slot
          for (int i = active_count - 1; i >= 0; --i)
            if (!taken[i]) {
              chosen = i;
              break;
            }
        }
        taken[chosen] = 1;
        remaining -= rank_mass[chosen];
        ta.experts.push_back(ids[chosen]);
      }
      double wsum = 0.0;
      for (int j = 0; j < spec.top_k; ++j) {
        ta.weights.push_back(uniform01(rng) + 1e-12);
        wsum += ta.weights.back();
      }
      for (double& w : ta.weights) w /= wsum;
      batch.tokens.push_back(std::move(ta));
    }
    trace.batches.push_back(std::move(batch));
  }
  return trace;
}

std::pair<LoadMatrix, LoadMatrix> split_trace(const LoadMatrix& loads, double fraction) {
  const Eigen::Index B = loads.num_batches();
  if (B < 2) fail("split requires at least 2 batches");
  if (fraction <= 0.0 || fraction >= 1.0) fail("split fraction must be in (0, 1)");
  const double raw = fraction * static_cast<double>(B);
  const double nearest = std::round(raw);
  const Eigen::Index cut = (std::abs(raw - nearest) < 1e-9 * std::max(1.0, raw))
                               ? static_cast<Eigen::Index>(nearest)
                               : static_cast<Eigen::Index>(std::floor(raw));
  if (cut == 0 || cut == B) fail("split produces an empty part");
  LoadMatrix first{loads.share.leftCols(cut)};
  LoadMatrix second{loads.share.rightCols(B - cut)};
  return {std::move(first), std::move(second)};
}

SparsityReport sparsity_stats(const LoadMatrix& loads) {
  const Eigen::Index E = loads.num_experts();
  const Eigen::Index B = loads.num_batches();
  SparsityReport report;
  report.inactive_per_batch.resize(B);
  report.top_share_per_batch.resize(B);
  report.mean_load = loads.share.rowwise().mean();

  double frac_sum = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto col = loads.share.col(b);
    const int inactive = static_cast<int>((col.array() == 0.0).count());
    report.inactive_per_batch[b] = inactive;
    report.top_share_per_batch[b] = col.maxCoeff();
    const double frac = static_cast<double>(inactive) / static_cast<double>(E);
    frac_sum += frac;
    report.max_inactive_fraction = std::max(report.max_inactive_fraction, frac);
  }
  report.mean_inactive_fraction = B > 0 ? frac_sum / static_cast<double>(B) : 0.0;
  report.never_active =
      static_cast<int>((loads.share.array().rowwise().sum() == 0.0).count());
  return report;
}

void save_load_matrix_csv(const LoadMatrix& loads, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.field("expert");
  for (Eigen::Index b = 0; b < loads.num_batches(); ++b)
    csv.field("b" + std::to_string(b));
  csv.endrow();
  for (Eigen::Index m = 0; m < loads.num_experts(); ++m) {
    csv.field(static_cast<int>(m));
    for (Eigen::Index b = 0; b < loads.num_batches(); ++b) csv.field(loads.share(m, b));
    csv.endrow();
  }
}

}  // namespace moesim
