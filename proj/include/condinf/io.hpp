#pragma once
// CSV input/output helpers and the configuration hash stamped into artifacts.
// All numbers are written with %.17g so outputs round-trip and byte-identical
// reruns are possible.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace condinf {

inline std::string fmt_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

struct CsvTable {
  std::vector<std::string> columns;
  Eigen::MatrixXd data;  // rows x columns

  int column(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == name) return static_cast<int>(j);
    return -1;
  }
};

// Reads a numeric CSV with a header row; '#'-prefixed lines are skipped.
inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("read_csv: cannot open " + path);
  CsvTable table;
  std::string line;
  std::vector<std::vector<double>> rows;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    if (!have_header) {
      while (std::getline(ss, cell, ',')) table.columns.push_back(cell);
      if (table.columns.empty()) throw std::invalid_argument("read_csv: empty header");
      have_header = true;
      continue;
    }
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::invalid_argument("read_csv: non-numeric cell '" + cell + "' in " + path);
      }
    }
    if (row.size() != table.columns.size())
      throw std::invalid_argument("read_csv: row width mismatch in " + path);
    rows.push_back(std::move(row));
  }
  if (!have_header) throw std::invalid_argument("read_csv: no header in " + path);
  table.data.resize(rows.size(), table.columns.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < table.columns.size(); ++j) table.data(i, j) = rows[i][j];
  return table;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw std::invalid_argument("CsvWriter: cannot open " + path);
  }
  void comment(const std::string& text) { out_ << "# " << text << "\n"; }
  void raw_line(const std::string& text) { out_ << text << "\n"; }
  void header(const std::vector<std::string>& cols) { write_cells(cols); }
  void row(const std::vector<std::string>& cells) { write_cells(cells); }
  void row(const std::vector<double>& vals) {
    std::vector<std::string> cells;
    cells.reserve(vals.size());
    for (double v : vals) cells.push_back(fmt_g17(v));
    write_cells(cells);
  }

 private:
  void write_cells(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }
  std::ofstream out_;
};

// FNV-1a over the canonical configuration dump; stamped as
// "# config-hash=<hex>" into every artifact.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string config_hash_hex(const std::string& canonical_config) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config)));
  return std::string(buf);
}

}  // namespace condinf
