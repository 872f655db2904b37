#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace codetwin {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
/// Shortest decimal form that parses back to the same float.
std::string format_float(float v);

/// Splits on '\n'; a trailing '\r' is dropped from each line. A final empty
/// line after the last '\n' is not returned.
std::vector<std::string_view> split_lines(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace codetwin
