#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace bivalid::io {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Index of a header column, or -1 when absent.
  int column(std::string_view name) const;
};

// Comma-separated text with a header row. Blank lines are skipped; fields are
// trimmed of surrounding whitespace. No quoting: ids must not contain commas.
Table read_table(std::istream& in, char delim = ',');
Table read_table_file(const std::filesystem::path& path, char delim = ',');

std::vector<std::string> split(std::string_view line, char delim);

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

// Strict parse of a finite decimal number; throws InputError on failure.
double parse_double(std::string_view s, std::size_t line, std::string_view what);

// Write through a temporary sibling then rename, so readers never see a
// half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace bivalid::io
