#pragma once

// Number formatting and strict parsing shared by the file formats.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace saf {

/// 17 significant digits; NaN and infinities as nan, inf, -inf.
std::string format_double(double v);

/// Whole-string parse; nullopt on any trailing or missing characters.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_integer(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string fnv1a_file(const std::string& path);

}  // namespace saf
