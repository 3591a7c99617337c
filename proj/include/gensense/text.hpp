#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gensense {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);
std::string format_fixed(double value, int decimals);

// Strict parsers; throw ConfigError naming `what` on malformed input.
double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);
std::int64_t parse_i64(std::string_view text, std::string_view what);
std::vector<double> parse_double_list(std::string_view text, std::string_view what);

std::string_view trim(std::string_view text);

// 64-bit FNV-1a, used for artifact digests.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace gensense
