#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ehrenfest/errors.hpp"
#include "ehrenfest/lorenz.hpp"

namespace ehrenfest {

/// Shortest decimal form that round-trips to the same double.
inline std::string format_double(double x) {
  std::array<char, 32> buf;
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), static_cast<std::size_t>(ptr - buf.data()));
}

/// Accumulates CSV text: comma-separated cells, LF line endings.
class CsvBuilder {
 public:
  CsvBuilder& cell(std::string_view s) {
    if (cells_in_row_ > 0) buf_ += ',';
    buf_ += s;
    ++cells_in_row_;
    return *this;
  }
  CsvBuilder& cell(double x) { return cell(format_double(x)); }
  CsvBuilder& end_row() {
    buf_ += '\n';
    cells_in_row_ = 0;
    return *this;
  }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
  int cells_in_row_ = 0;
};

/// Writes content to path through a sibling temp file and an atomic rename,
/// so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
  const std::size_t written = std::fwrite(content.data(), 1, content.size(), f);
  const bool flushed = std::fflush(f) == 0;
  std::fclose(f);
  if (written != content.size() || !flushed) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                  ec.message());
  }
}

namespace detail {

inline bool parse_double(std::string_view s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

}  // namespace detail

/// Reads a list of phase points from a CSV of three numeric columns
/// (p1,p2,p3 per line). A single leading header line is skipped if its first
/// field is not a number.
inline std::vector<PhasePoint> read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::vector<PhasePoint> points;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (pos > text.size()) break;
      continue;
    }

    std::array<std::string_view, 3> fields;
    std::size_t start = 0;
    int n_fields = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (n_fields < 3) fields[static_cast<std::size_t>(n_fields)] = line.substr(start, i - start);
        ++n_fields;
        start = i + 1;
      }
    }
    double a, b, c;
    const bool parsed = n_fields == 3 && detail::parse_double(fields[0], a) &&
                        detail::parse_double(fields[1], b) &&
                        detail::parse_double(fields[2], c);
    if (!parsed) {
      if (line_no == 1) continue;  // header
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) +
                            ": expected three comma-separated numbers");
    }
    points.push_back(PhasePoint{a, b, c});
  }
  if (points.empty())
    throw InvalidArgument(path.string() + ": no sample points found");
  return points;
}

}  // namespace ehrenfest
