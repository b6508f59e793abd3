#pragma once

#include <string>
#include <vector>

namespace metaexp::csv {

// shortest decimal text that parses back to the exact same double, so
// emitted tables are byte-reproducible and lossless
std::string format_double(double v);

// Fixed-schema comma-separated table.  Cells must not contain commas,
// quotes or line breaks -- the writer rejects them instead of quoting.
class Table {
 public:
  explicit Table(std::vector<std::string> columns);

  void add_row(std::vector<std::string> cells);

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  int column(const std::string& name) const;  // index; unknown names throw

  std::string to_string() const;
  // temp-file-then-rename so a reader never observes a half-written table
  void write_file(const std::string& path) const;

  static Table parse(const std::string& text);
  static Table read_file(const std::string& path);

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace metaexp::csv
