#ifndef GPKRYLOV_CSV_HPP
#define GPKRYLOV_CSV_HPP

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gpkrylov/common.hpp"

namespace gpkrylov {

/// Writes comma-separated files with one schema-comment line, one header
/// line, `.` decimals and no non-finite values. Rows are flushed as they are
/// written so partial results survive an abort.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& schema,
            const std::vector<std::string>& columns)
      : out_(path), ncols_(columns.size()) {
    if (!out_) throw input_error("CsvWriter: cannot open " + path);
    out_ << "# schema: " << schema << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i)
      out_ << columns[i] << (i + 1 < columns.size() ? "," : "");
    out_ << "\n";
    out_.flush();
  }

  static std::string format(double v) {
    if (!std::isfinite(v)) throw numerical_error("CsvWriter: refusing to write non-finite value");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }

  void write_row(const std::vector<std::string>& cells) {
    if (cells.size() != ncols_)
      throw input_error("CsvWriter: row has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(ncols_));
    for (std::size_t i = 0; i < cells.size(); ++i)
      out_ << cells[i] << (i + 1 < cells.size() ? "," : "");
    out_ << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
  std::size_t ncols_;
};

struct CsvTable {
  std::string schema;  // empty when the file has no schema comment
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    throw input_error("CsvTable: no column named '" + name + "'");
  }

  double number(std::size_t row, const std::string& name) const {
    const std::string& cell = rows.at(row).at(static_cast<std::size_t>(column_index(name)));
    double v{};
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size())
      throw input_error("CsvTable: cell '" + cell + "' in column " + name + " is not numeric");
    return v;
  }
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim surrounding whitespace
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}
}  // namespace detail

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("read_csv_table: cannot open " + path);
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (table.schema.empty()) {
        const std::string tag = "# schema: ";
        table.schema = line.rfind(tag, 0) == 0 ? line.substr(tag.size()) : line.substr(1);
      }
      continue;
    }
    auto cells = detail::split_csv_line(line);
    if (!have_header) {
      table.columns = std::move(cells);
      have_header = true;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

}  // namespace gpkrylov

#endif
