#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace hintlab::csv {

// Header + string cells. Quoted fields with embedded commas/quotes/newlines
// are handled; empty string means missing.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const;           // -1 if absent
  int require_col(const std::string& name) const;   // throws if absent
  const std::string& at(std::size_t row, int col) const { return rows[row][col]; }
};

Table read_file(const std::string& path);
Table read_string(const std::string& text);

void write_file(const std::string& path, const Table& t);
std::string to_string(const Table& t);

// shortest round-trip decimal form, locale independent
std::string format_double(double v);

double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

}  // namespace hintlab::csv
