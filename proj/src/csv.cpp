#include "hintlab/csv.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hintlab/common.hpp"

namespace hintlab::csv {

namespace {

// splits one logical CSV record starting at pos; advances pos past the
// trailing newline
std::vector<std::string> parse_record(const std::string& text, std::size_t& pos) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  while (pos < text.size()) {
    char c = text[pos];
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          cur += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else {
      if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(cur));
        cur.clear();
      } else if (c == '\n') {
        ++pos;
        break;
      } else if (c != '\r') {
        cur += c;
      }
    }
    ++pos;
  }
  fields.push_back(std::move(cur));
  return fields;
}

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\n\r") != std::string::npos;
}

}  // namespace

int Table::col(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

int Table::require_col(const std::string& name) const {
  int c = col(name);
  if (c < 0) throw Error("csv: missing required column '" + name + "'");
  return c;
}

Table read_string(const std::string& text) {
  Table t;
  std::size_t pos = 0;
  if (text.empty()) throw Error("csv: empty input");
  t.header = parse_record(text, pos);
  while (pos < text.size()) {
    auto rec = parse_record(text, pos);
    if (rec.size() == 1 && rec[0].empty()) continue;  // blank line
    if (rec.size() != t.header.size())
      throw Error("csv: row " + std::to_string(t.rows.size() + 2) + " has " +
                  std::to_string(rec.size()) + " fields, expected " +
                  std::to_string(t.header.size()));
    t.rows.push_back(std::move(rec));
  }
  return t;
}

Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("csv: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return read_string(ss.str());
  } catch (const Error& e) {
    throw Error(std::string(e.what()) + " [" + path + "]");
  }
}

std::string to_string(const Table& t) {
  std::string out;
  auto emit_row = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      if (needs_quoting(row[i])) {
        out += '"';
        for (char c : row[i]) {
          if (c == '"') out += '"';
          out += c;
        }
        out += '"';
      } else {
        out += row[i];
      }
    }
    out += '\n';
  };
  emit_row(t.header);
  for (const auto& r : t.rows) emit_row(r);
  return out;
}

void write_file(const std::string& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("csv: cannot write '" + path + "'");
  out << to_string(t);
}

std::string format_double(double v) {
  char buf[64];
  // %.17g round-trips doubles exactly and is locale independent for snprintf
  // with the C locale digits we rely on here
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error("csv: bad numeric value '" + s + "' in " + context);
  return v;
}

long parse_long(const std::string& s, const std::string& context) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error("csv: bad integer value '" + s + "' in " + context);
  return v;
}

}  // namespace hintlab::csv
