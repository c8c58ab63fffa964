#pragma once

// Small helpers shared by the delimited-text readers and writers.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mehmm::text {

std::string_view trim(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::string lower(std::string_view s);

/// Splits on `delim`, trimming whitespace and one layer of double quotes.
std::vector<std::string> split(std::string_view line, char delim);

/// Comma unless the line contains a tab (then tab) or a semicolon but no comma.
char detect_delimiter(std::string_view line);

std::optional<long long> parse_int(std::string_view s);
std::optional<double> parse_double(std::string_view s);

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

/// "<path>:<line>: <message>"
std::string where(const std::filesystem::path& path, std::size_t line, std::string_view message);

}  // namespace mehmm::text
