#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sgbd/errors.hpp"

namespace sgbd {

/// Shortest-faithful decimal rendering: 17 significant digits round-trip any
/// double exactly. NaN renders as an empty field (used for "no value" cells).
inline std::string csv_num(double v) {
  if (std::isnan(v)) return {};
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Comma-separated writer: '.' decimal point, header row, LF line endings.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path)
      : out_(path, std::ios::binary), path_(path.string()) {
    if (!out_) throw IoError("cannot open for writing: " + path_);
  }

  void comment(const std::string& line) { out_ << "# " << line << "\n"; }

  void header(const std::vector<std::string>& names) { write_row(names); }

  void row(const std::vector<std::string>& fields) { write_row(fields); }

  void row_nums(const std::vector<double>& values) {
    std::vector<std::string> fields;
    fields.reserve(values.size());
    for (double v : values) fields.push_back(csv_num(v));
    write_row(fields);
  }

  void flush_checked() {
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  std::ofstream out_;
  std::string path_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> comments;  // leading '#' lines, marker stripped

  double num(std::size_t row, const std::string& col) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == col) {
        const auto& cell = rows[row][j];
        if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
        return std::stod(cell);
      }
    }
    throw IoError("csv column not found: " + col);
  }

  const std::string& str(std::size_t row, const std::string& col) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == col) return rows[row][j];
    }
    throw IoError("csv column not found: " + col);
  }
};

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t start = line.size() > 1 && line[1] == ' ' ? 2 : 1;
      table.comments.push_back(line.substr(start));
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) fields.push_back(cell);
    if (line.back() == ',') fields.emplace_back();
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  return table;
}

}  // namespace sgbd
