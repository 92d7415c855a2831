#pragma once

#include <charconv>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "crossloc/common.hpp"

namespace crossloc {

/// Whitespace tokens of `line` up to the first '#'.
inline std::vector<std::string_view> split_tokens(std::string_view line) {
  if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline double parse_double(std::string_view tok, const std::string& file, int line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(file, line, "bad number '" + std::string(tok) + "'");
  }
  return v;
}

inline long parse_long(std::string_view tok, const std::string& file, int line) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(file, line, "bad integer '" + std::string(tok) + "'");
  }
  return v;
}

/// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Reads flat `key = value` lines; '#' starts a comment. Duplicate keys are
/// rejected so a typo cannot silently shadow an earlier line.
std::map<std::string, std::string> read_key_values(const std::string& path);

/// Splits `key=value` (whitespace around '=' allowed); returns false if no '='.
bool split_assignment(std::string_view text, std::string& key, std::string& value);

}  // namespace crossloc
