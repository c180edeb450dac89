#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dvgnn::csv {

std::vector<std::string> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

// Parses a finite decimal; throws ParseError(file, line) otherwise.
double parse_double(std::string_view cell, const std::string& file, std::size_t line);
// Empty cell -> nullopt (missing value).
std::optional<double> parse_optional(std::string_view cell, const std::string& file, std::size_t line);

// Reads a file into lines, dropping a trailing '\r' on each. Throws DataError if unreadable.
std::vector<std::string> read_lines(const std::string& path);

// Flat `key = value` lines; '#' starts a comment. Keys and values are trimmed.
std::map<std::string, std::string> read_key_values(const std::string& path);

// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::string& path, const std::string& content);

// Shortest round-trippable text for a double.
std::string format_double(double v);

}  // namespace dvgnn::csv
