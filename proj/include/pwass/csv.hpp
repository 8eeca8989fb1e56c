#pragma once

#include "pwass/common.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace pwass {

/// Doubles are written with 17 significant digits so a parse round-trips to
/// the identical bit pattern and reruns produce byte-identical files.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericError("cannot open " + path + " for writing");
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c) out << ',';
    out << table.header[c];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << row[c];
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw NumericError("failed writing " + path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StructuralError("cannot open " + path);
  CsvTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (line_no == 1) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size())
      throw StructuralError(path + ": line " + std::to_string(line_no) +
                            ": expected " +
                            std::to_string(table.header.size()) +
                            " fields, got " + std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty())
    throw StructuralError(path + ": empty file");
  return table;
}

inline int column_index(const CsvTable& table, const std::string& name,
                        const std::string& path) {
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (table.header[c] == name) return static_cast<int>(c);
  throw StructuralError(path + ": missing column '" + name + "'");
}

inline double parse_double(const std::string& s, const std::string& path,
                           int line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw StructuralError(path + ": line " + std::to_string(line_no) +
                          ": not a number: '" + s + "'");
  return v;
}

inline long parse_int(const std::string& s, const std::string& path,
                      int line_no) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw StructuralError(path + ": line " + std::to_string(line_no) +
                          ": not an integer: '" + s + "'");
  return v;
}

}  // namespace pwass
