#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "splicequant/error.hpp"

namespace splicequant::tsv {

inline std::vector<std::string_view> split(std::string_view line, char sep = '\t') {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

inline std::int64_t parse_int(std::string_view s, std::int64_t line, std::string_view what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw InputError("invalid integer for " + std::string(what) + ": '" + std::string(s) + "'", line);
  return v;
}

inline double parse_double(std::string_view s, std::int64_t line, std::string_view what) {
  // from_chars for double is available in libstdc++ 11
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw InputError("invalid number for " + std::string(what) + ": '" + std::string(s) + "'", line);
  return v;
}

/// Reads lines while tracking the line number; skips blank lines.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  }

  std::int64_t line_no() const { return line_no_; }

 private:
  std::istream& in_;
  std::int64_t line_no_ = 0;
};

/// Validates a header row against the expected column names.
inline void expect_header(std::string_view line, const std::vector<std::string_view>& cols,
                          std::int64_t line_no) {
  auto got = split(line);
  bool ok = got.size() == cols.size();
  for (std::size_t i = 0; ok && i < cols.size(); ++i) ok = got[i] == cols[i];
  if (!ok) {
    std::string want;
    for (auto c : cols) want += (want.empty() ? "" : "\\t") + std::string(c);
    throw InputError("expected header '" + want + "'", line_no);
  }
}

}  // namespace splicequant::tsv
