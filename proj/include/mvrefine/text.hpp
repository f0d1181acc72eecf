#pragma once

// Small helpers for the line-oriented text formats.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mvrefine::text {

/// Shortest decimal that round-trips to the same double; "nan"/"inf"/"-inf" for non-finite.
std::string format_double(double value);

/// Whitespace-separated fields of a line.
std::vector<std::string_view> split_fields(std::string_view line);

/// Parses a full field as a finite double; throws ParseError with the given line number.
double parse_double(std::string_view field, std::size_t line_number);

/// Strips trailing '\r' and surrounding blanks.
std::string_view trim(std::string_view s);

/// Reads a whole file; throws Error if it cannot be opened.
std::string read_file(const std::string& path);

/// Writes atomically enough for our purposes (truncate + write); throws Error on failure.
void write_file(const std::string& path, std::string_view contents);

}  // namespace mvrefine::text
