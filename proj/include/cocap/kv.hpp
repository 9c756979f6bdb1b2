#pragma once

// Flat "key = value" text files: one pair per line, '#' starts a comment.

#include <charconv>
#include <stdexcept>
#include <type_traits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "cocap/error.hpp"

namespace cocap::kv {

using Map = std::map<std::string, std::string, std::less<>>;

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline Map parse(std::string_view text) {
  Map out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::size_t line_start = pos;
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("line " + std::to_string(line_no) + " has no '='", line_start);
    out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

inline std::string format(const Map& m) {
  std::string out;
  for (const auto& [k, v] : m) out += k + " = " + v + "\n";
  return out;
}

template <class T>
T get_number(const Map& m, std::string_view key, T fallback) {
  const auto it = m.find(key);
  if (it == m.end()) return fallback;
  if constexpr (std::is_same_v<T, double>) {
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("invalid number for " + std::string(key) + ": " + it->second);
    }
  } else {
    T v{};
    const auto& s = it->second;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError("invalid integer for " + std::string(key) + ": " + s);
    return v;
  }
}

inline bool get_bool(const Map& m, std::string_view key, bool fallback) {
  const auto it = m.find(key);
  if (it == m.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("invalid boolean for " + std::string(key) + ": " + it->second);
}

inline std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace cocap::kv
