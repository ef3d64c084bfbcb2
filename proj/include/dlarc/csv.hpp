#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dlarc::csv {

/// Splits one line on commas. No quoting support: none of our formats need it.
std::vector<std::string> split_line(std::string_view line);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// Parses a full field as a double; throws DataError with `context` on failure.
double parse_double(std::string_view field, std::string_view context);

std::vector<std::string> read_lines(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace dlarc::csv
