#include "metaexp/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "metaexp/errors.hpp"

namespace metaexp::csv {

std::string format_double(double v) {
  char buf[64];
  // 15 digits when they round-trip, 17 otherwise (17 always round-trips)
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  if (std::strtod(buf, nullptr) != v) std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void check_cell(const std::string& cell) {
  for (char c : cell) {
    check(c != ',' && c != '"' && c != '\n' && c != '\r',
          "csv: cell contains a delimiter or line break: " + cell);
  }
}

}  // namespace

Table::Table(std::vector<std::string> columns) : columns_(std::move(columns)) {
  check(!columns_.empty(), "csv: table needs at least one column");
  for (const auto& c : columns_) check_cell(c);
}

void Table::add_row(std::vector<std::string> cells) {
  check(cells.size() == columns_.size(), "csv: row width does not match the header");
  for (const auto& c : cells) check_cell(c);
  rows_.push_back(std::move(cells));
}

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i] == name) return static_cast<int>(i);
  }
  throw ContractViolation("csv: unknown column " + name);
}

std::string Table::to_string() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (i) out << ',';
    out << columns_[i];
  }
  out << '\n';
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i];
    }
    out << '\n';
  }
  return out.str();
}

void Table::write_file(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("csv: cannot open " + tmp);
    out << to_string();
    if (!out) throw std::runtime_error("csv: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Table Table::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "csv: empty input");
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : s) {
      if (c == ',') {
        cells.push_back(std::move(cell));
        cell.clear();
      } else if (c != '\r') {
        cell.push_back(c);
      }
    }
    cells.push_back(std::move(cell));
    return cells;
  };
  Table t(split(line));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.add_row(split(line));
  }
  return t;
}

Table Table::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("csv: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

}  // namespace metaexp::csv
