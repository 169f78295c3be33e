#include "slicebf/table.hpp"

#include <fstream>
#include <sstream>

#include "slicebf/error.hpp"

namespace slicebf {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw InputError("missing column '" + std::string(name) + "'");
}

std::vector<std::string> Table::column_values(std::string_view name) const {
  const std::size_t c = column(name);
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row[c]);
  return out;
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \r");
  return s.substr(first, last - first + 1);
}

}  // namespace

Table parse_delimited(std::string_view text, char delimiter) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string cell;
  bool quoted = false;
  bool cell_was_quoted = false;
  std::size_t line = 1;

  auto end_cell = [&] {
    record.push_back(cell_was_quoted ? cell : trim(cell));
    cell.clear();
    cell_was_quoted = false;
  };
  auto end_record = [&] {
    end_cell();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    if (c == '"' && trim(cell).empty()) {
      cell.clear();
      quoted = true;
      cell_was_quoted = true;
    } else if (c == delimiter) {
      end_cell();
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      cell.push_back(c);
    }
  }
  if (quoted) throw InputError("unterminated quoted field near line " + std::to_string(line));
  if (!cell.empty() || !record.empty()) end_record();

  if (records.empty()) throw InputError("input has no header row");
  Table table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw InputError("row " + std::to_string(r + 1) + " has " +
                       std::to_string(records[r].size()) + " cells, header has " +
                       std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

char infer_delimiter(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".tsv" || ext == ".tab" || ext == ".txt") return '\t';
  return ',';
}

Table read_table(const std::filesystem::path& path, std::optional<char> delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_delimited(buffer.str(), delimiter.value_or(infer_delimiter(path)));
}

}  // namespace slicebf
