#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/tokenizer.hpp>

#include "sentfeed/error.hpp"

namespace sentfeed::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  int column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline Table parse(std::istream& in, const std::string& source = "<stream>") {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  Table table;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    try {
      Tokenizer tok(line);
      for (const auto& f : tok) fields.push_back(trim(f));
    } catch (const boost::escaped_list_error& e) {
      fail(ErrorKind::SchemaViolation, source + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      fail(ErrorKind::SchemaViolation, source + ":" + std::to_string(lineno) + ": expected " +
                                           std::to_string(table.header.size()) + " fields, got " +
                                           std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(lineno);
  }
  if (!have_header) fail(ErrorKind::SchemaViolation, source + ": empty file");
  return table;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::SchemaViolation, "cannot open '" + path + "'");
  return parse(in, path);
}

inline double parse_double(const std::string& field, const std::string& where) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) fail(ErrorKind::SchemaViolation, where + ": not a number: '" + field + "'");
  return v;
}

}  // namespace sentfeed::csv
