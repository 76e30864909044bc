#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

namespace moesim {

/// Line-oriented CSV writer with deterministic number formatting (%.12g for
/// doubles), so identical inputs produce byte-identical files.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  CsvWriter& field(const std::string& s);
  CsvWriter& field(const char* s);
  CsvWriter& field(double v);
  CsvWriter& field(std::int64_t v);
  CsvWriter& field(int v);
  void endrow();

  template <typename... Ts>
  void row(Ts&&... values) {
    (field(std::forward<Ts>(values)), ...);
    endrow();
  }

 private:
  std::ofstream out_;
  bool line_open_ = false;
};

std::string format_double(double v);

}  // namespace moesim
