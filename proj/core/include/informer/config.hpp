// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value parsing shared by config files and inline specs.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace informer {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Splits `text` into key=value entries separated by `separator` (newline for
// files, comma for inline specs). Whitespace around keys and values is
// trimmed, '#' starts a comment, blank entries are skipped. Duplicate keys
// and entries without '=' are ConfigErrors.
KeyValues parse_key_values(std::string_view text, char separator);

std::size_t parse_size(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);

}  // namespace informer
