#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace slicebf {

/// A delimited text table: header row plus string cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of the named column; throws InputError when absent.
  std::size_t column(std::string_view name) const;
  std::vector<std::string> column_values(std::string_view name) const;
};

/// Parses CSV/TSV text. Double-quoted fields may contain the delimiter,
/// newlines, and "" escapes. Blank lines are skipped. Every row must have
/// as many cells as the header.
Table parse_delimited(std::string_view text, char delimiter);

/// '\t' for .tsv/.tab/.txt files, ',' otherwise.
char infer_delimiter(const std::filesystem::path& path);

Table read_table(const std::filesystem::path& path,
                 std::optional<char> delimiter = std::nullopt);

}  // namespace slicebf
