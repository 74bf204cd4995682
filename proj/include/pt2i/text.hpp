#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pt2i {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Comparison key for names and labels: whitespace-trimmed, lower-cased.
std::string name_key(std::string_view s);
bool same_name(std::string_view a, std::string_view b);

/// True when `phrase` occurs in `text` with non-alphanumeric characters (or the
/// string ends) on both sides. Case-insensitive.
bool contains_phrase(std::string_view text, std::string_view phrase);

std::vector<std::string> split_words(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Shortest round-trip-free rendering used inside prompts: up to four
/// significant digits, no trailing zeros ("0.35", "1", "0.0833").
std::string format_number(double v);

/// 64-bit FNV-1a. Stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace pt2i
