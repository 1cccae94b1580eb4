#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gcp {

// Per-step loss table, persisted as CSV.
class TrainingLog {
 public:
  TrainingLog() = default;
  explicit TrainingLog(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void append(std::vector<double> row);

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  size_t column_index(const std::string& name) const;
  // Mean of `column` over rows [begin, end).
  double mean(const std::string& column, size_t begin, size_t end) const;
  double last(const std::string& column) const;

  void write_csv(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<double>> rows_;
};

}  // namespace gcp
