#include "pirbn/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pirbn/error.hpp"

namespace pirbn {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw InvalidInput("csv: no column named '" + name + "'");
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("csv: cannot write " + path.string());
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, const fs::path& path, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size()) {
    throw InvalidInput("csv: " + path.string() + ":" + std::to_string(line) + ": bad number '" + cell + "'");
  }
  return v;
}

}  // namespace

void write_csv(const fs::path& path, const CsvTable& table) {
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw DimensionMismatch("csv: row width differs from header");
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
  if (!out) throw InvalidInput("csv: write failed for " + path.string());
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("csv: cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("csv: " + path.string() + " is empty");
  t.header = split(line);
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size()) {
      throw InvalidInput("csv: " + path.string() + ":" + std::to_string(n) + ": expected " +
                         std::to_string(t.header.size()) + " cells");
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c, path, n));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out = open_out(path);
  for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << 'k' << j;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
  if (!out) throw InvalidInput("csv: write failed for " + path.string());
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.rows[i][j];
    }
  }
  return m;
}

}  // namespace pirbn
