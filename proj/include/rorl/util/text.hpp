#pragma once

#include <string>
#include <vector>

namespace rorl::util {

/// Shortest text that parses back to the same double (17 significant digits).
std::string format_real(double v);

/// Strict parsers for config values; the whole string must be consumed.
/// Failures throw ConfigError naming `key`.
double parse_real(const std::string& key, const std::string& text);
int parse_int(const std::string& key, const std::string& text);
long long parse_int64(const std::string& key, const std::string& text);
bool parse_bool(const std::string& key, const std::string& text);
std::vector<int> parse_int_list(const std::string& key, const std::string& text);
std::vector<double> parse_real_list(const std::string& key, const std::string& text);
std::vector<std::string> split_list(const std::string& text);

std::string trim(const std::string& s);

}  // namespace rorl::util
