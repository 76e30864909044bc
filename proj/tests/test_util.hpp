#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "moesim/trace.hpp"

namespace moesim::test {

// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("moesim_" + tag + "_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// k=1 batch from a plain expert-id list.
inline Batch make_batch(const std::vector<int>& experts, std::int64_t batch_id = 0) {
  Batch batch;
  batch.batch_id = batch_id;
  for (int e : experts) batch.tokens.push_back(TokenAssignment{{e}, {1.0}});
  return batch;
}

// k=2 batch from (expert, expert) pairs with equal weights.
inline Batch make_batch2(const std::vector<std::pair<int, int>>& pairs,
                         std::int64_t batch_id = 0) {
  Batch batch;
  batch.batch_id = batch_id;
  for (auto [a, b] : pairs)
    batch.tokens.push_back(TokenAssignment{{a, b}, {0.5, 0.5}});
  return batch;
}

// Random batch with k distinct experts per token, weights normalized.
inline Batch random_batch(std::mt19937_64& rng, int seq_len, int num_experts, int k) {
  Batch batch;
  for (int t = 0; t < seq_len; ++t) {
    TokenAssignment ta;
    while (static_cast<int>(ta.experts.size()) < k) {
      const int e = static_cast<int>(rng() % num_experts);
      bool dup = false;
      for (int prev : ta.experts) dup |= (prev == e);
      if (!dup) ta.experts.push_back(e);
    }
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      ta.weights.push_back(1.0 + static_cast<double>(rng() % 1000));
      sum += ta.weights.back();
    }
    for (double& w : ta.weights) w /= sum;
    batch.tokens.push_back(std::move(ta));
  }
  return batch;
}

}  // namespace moesim::test
