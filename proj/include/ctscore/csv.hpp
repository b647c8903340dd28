#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace ctscore {

/// Shortest round-trip decimal form of v.
std::string format_number(double v);

/// Writes a header row, one "# ..." comment row, then data rows.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header,
            const std::string& comment);

  void row(const std::vector<double>& values);
  /// Leading text cells followed by numbers.
  void row(const std::vector<std::string>& text, const std::vector<double>& values);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::string> comments;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws std::out_of_range.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace ctscore
