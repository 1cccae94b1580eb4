#include "gcp/training_log.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

#include "gcp/errors.hpp"

namespace gcp {

void TrainingLog::append(std::vector<double> row) {
  if (row.size() != columns_.size()) {
    throw TrainingError("log row has " + std::to_string(row.size()) + " values, expected " +
                        std::to_string(columns_.size()));
  }
  rows_.push_back(std::move(row));
}

size_t TrainingLog::column_index(const std::string& name) const {
  auto it = std::find(columns_.begin(), columns_.end(), name);
  if (it == columns_.end()) throw TrainingError("no log column '" + name + "'");
  return static_cast<size_t>(it - columns_.begin());
}

double TrainingLog::mean(const std::string& column, size_t begin, size_t end) const {
  const auto c = column_index(column);
  end = std::min(end, rows_.size());
  if (begin >= end) throw TrainingError("empty log range for '" + column + "'");
  double s = 0.0;
  for (size_t i = begin; i < end; ++i) s += rows_[i][c];
  return s / static_cast<double>(end - begin);
}

double TrainingLog::last(const std::string& column) const {
  if (rows_.empty()) throw TrainingError("empty log");
  return rows_.back()[column_index(column)];
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw TrainingError("cannot write " + path.string());
  for (size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i];
  out << "\n" << std::setprecision(10);
  for (const auto& row : rows_) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

}  // namespace gcp
