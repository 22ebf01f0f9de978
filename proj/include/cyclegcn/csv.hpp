#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cyclegcn {

/// Comma-separated table. Fields may be double-quoted to hold commas; quoted
/// fields cannot span lines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based source line of each row, for error messages.
  std::vector<std::size_t> lines;
  std::string source;

  std::optional<std::size_t> column(std::string_view name) const;
  std::size_t require_column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text, std::string_view source = "<memory>");
CsvTable read_csv(const std::filesystem::path& path);

/// Quotes fields that contain a comma, quote or newline.
std::string join_csv(const std::vector<std::string>& fields);

/// Shortest round-trippable decimal form; NaN prints as "nan".
std::string format_number(double value);
/// Fixed number of decimals; used for report tables.
std::string format_fixed(double value, int decimals);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace cyclegcn
