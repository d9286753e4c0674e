#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

namespace pirbn {

/// Shortest decimal text that round-trips (17 significant digits).
std::string format_double(double v);

/// Comma-separated table with a header row; every cell is a double.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a named column; throws InvalidInput if absent.
  std::size_t column(const std::string& name) const;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

/// Dense matrix as CSV with header k0,k1,... and one row per matrix row.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

}  // namespace pirbn
