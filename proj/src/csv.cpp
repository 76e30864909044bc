#include "moesim/csv.hpp"

#include <cstdio>
#include <stdexcept>

namespace moesim {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
  if (!out_) throw std::runtime_error("cannot write file: " + path.string());
}

CsvWriter& CsvWriter::field(const std::string& s) {
  if (line_open_) out_ << ',';
  out_ << s;
  line_open_ = true;
  return *this;
}

CsvWriter& CsvWriter::field(const char* s) { return field(std::string(s)); }

CsvWriter& CsvWriter::field(double v) { return field(format_double(v)); }

CsvWriter& CsvWriter::field(std::int64_t v) { return field(std::to_string(v)); }

CsvWriter& CsvWriter::field(int v) { return field(std::to_string(v)); }

void CsvWriter::endrow() {
  out_ << '\n';
  line_open_ = false;
}

}  // namespace moesim
