#include "rorl/util/text.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "rorl/errors.hpp"

namespace rorl::util {

std::string format_real(double v) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

namespace {
[[noreturn]] void bad(const std::string& key, const std::string& text, const char* kind) {
  throw ConfigError("key '" + key + "': expected " + kind + ", got '" + text + "'");
}
}  // namespace

double parse_real(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) bad(key, text, "a real number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v))
    bad(key, text, "a finite real number");
  return v;
}

long long parse_int64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) bad(key, text, "an integer");
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size() || errno == ERANGE) bad(key, text, "an integer");
  return v;
}

int parse_int(const std::string& key, const std::string& text) {
  const long long v = parse_int64(key, text);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    bad(key, text, "an integer in int range");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true") return true;
  if (t == "false") return false;
  bad(key, text, "true or false");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string t = trim(text);
  if (t.size() >= 2 && t.front() == '[' && t.back() == ']') t = t.substr(1, t.size() - 2);
  if (trim(t).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = t.find(',', start);
    out.push_back(trim(t.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) out.push_back(parse_int(key, item));
  return out;
}

std::vector<double> parse_real_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_real(key, item));
  return out;
}

}  // namespace rorl::util
