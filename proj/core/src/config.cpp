// SPDX-License-Identifier: Apache-2.0
#include "informer/config.hpp"

#include <charconv>
#include <cmath>
#include <set>

#include "informer/error.hpp"

namespace informer {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues parse_key_values(std::string_view text, char separator) {
  KeyValues out;
  std::set<std::string> seen;
  std::size_t line = 0;
  while (!text.empty()) {
    ++line;
    const auto end = text.find(separator);
    std::string_view entry = text.substr(0, end);
    text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
    if (const auto hash = entry.find('#'); hash != std::string_view::npos) entry = entry.substr(0, hash);
    entry = trim(entry);
    if (entry.empty()) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("entry " + std::to_string(line) + " is not key=value: '" + std::string(entry) + "'");
    }
    std::string key(trim(entry.substr(0, eq)));
    std::string value(trim(entry.substr(eq + 1)));
    if (key.empty()) throw ConfigError("entry " + std::to_string(line) + " has an empty key");
    if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(v)) {
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  }
  return v;
}

}  // namespace informer
