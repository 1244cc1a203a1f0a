#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace protonorm {

/// Shortest decimal form that parses back to the identical double.
std::string format_real(double value);

double parse_real(std::string_view text);
long long parse_integer(std::string_view text);

/// Splits on `sep`; empty fields are kept.
std::vector<std::string_view> split_fields(std::string_view line, char sep);

std::string_view trim(std::string_view text);

}  // namespace protonorm
