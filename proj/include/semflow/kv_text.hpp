// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value text: one pair per line, '#' comments, surrounding blanks trimmed.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace semflow::kv {

std::vector<std::pair<std::string, std::string>> parse(const std::string& text);
std::vector<std::string> split_list(const std::string& value);

int to_int(const std::string& key, const std::string& value);
std::uint64_t to_u64(const std::string& key, const std::string& value);
double to_double(const std::string& key, const std::string& value);
bool to_bool(const std::string& key, const std::string& value);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace semflow::kv
