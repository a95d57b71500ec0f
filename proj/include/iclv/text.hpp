#pragma once

// Small text helpers shared by the file readers: trimming, number parsing,
// key=value documents and RFC-4180 style CSV.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace iclv::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool iequals(std::string_view a, std::string_view b);
bool starts_with(std::string_view s, std::string_view prefix);

/// Parses a complete string as a double; std::nullopt on trailing garbage.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

/// Shortest round-trippable representation of a double.
std::string format_double(double v);

/// One `key = value` entry of a config document, with its source line.
struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
/// Throws DataError on a non-empty line without '='.
std::vector<KeyValue> parse_key_values(std::string_view document);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or std::nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view document);
CsvTable read_csv(const std::string& path);

std::string csv_escape(std::string_view field);
void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

}  // namespace iclv::text
