#pragma once

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "margeff/dataset.hpp"
#include "margeff/errors.hpp"

namespace margeff {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_numeric_cell(const std::string& cell, std::size_t line_no,
                                 const std::string& header) {
  std::string t = trim(cell);
  if (t.empty()) {
    throw Error(ErrorCode::non_numeric, "empty cell in column '" + header +
                                            "' at line " + std::to_string(line_no));
  }
  const char* begin = t.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(begin, &end);
  if (end != begin + t.size() || errno == ERANGE) {
    throw Error(ErrorCode::non_numeric, "non-numeric cell '" + t + "' in column '" +
                                            header + "' at line " +
                                            std::to_string(line_no));
  }
  return v;
}

}  // namespace detail

// Header row of names followed by numeric rows. Rejects ragged rows,
// non-numeric cells and duplicate header names.
inline Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::empty_input, "empty file: " + path);
  }
  std::vector<std::string> headers = detail::split_csv_line(line);
  for (auto& h : headers) h = detail::trim(h);
  for (std::size_t i = 0; i < headers.size(); ++i) {
    if (headers[i].empty()) {
      throw Error(ErrorCode::non_numeric, "empty header name in " + path);
    }
    for (std::size_t j = i + 1; j < headers.size(); ++j) {
      if (headers[i] == headers[j]) {
        throw Error(ErrorCode::duplicate_column, "duplicate header: " + headers[i]);
      }
    }
  }

  std::vector<std::vector<double>> columns(headers.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != headers.size()) {
      throw Error(ErrorCode::ragged_row,
                  "line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(headers.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      columns[j].push_back(detail::parse_numeric_cell(cells[j], line_no, headers[j]));
    }
  }
  if (columns.empty() || columns[0].empty()) {
    throw Error(ErrorCode::empty_input, "no data rows in " + path);
  }

  Dataset data;
  for (std::size_t j = 0; j < headers.size(); ++j) {
    data.add_column(headers[j], std::move(columns[j]));
  }
  return data;
}

// Shortest round-trip formatting so re-reads reproduce values exactly and
// re-runs are byte-identical.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline void write_csv(const Dataset& data, std::ostream& out) {
  const auto& names = data.names();
  for (std::size_t j = 0; j < names.size(); ++j) {
    out << (j ? "," : "") << names[j];
  }
  out << "\n";
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      out << (j ? "," : "") << format_double(data.col(j)[i]);
    }
    out << "\n";
  }
}

inline void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  write_csv(data, out);
}

}  // namespace margeff
