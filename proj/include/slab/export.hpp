#pragma once

// RFC 4180 CSV output. Numbers are written with 17 significant digits so a
// parse of the file restores every double exactly.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slab/matrix.hpp"

namespace slab::io {

std::string format_double(double v);
// Quotes a field if it contains a comma, quote, CR or LF.
std::string csv_field(std::string_view raw);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  CsvWriter& row(std::vector<std::string> fields);
  std::size_t columns() const { return columns_; }
  const std::string& text() const { return text_; }
  void save(const std::filesystem::path& path) const;

 private:
  void line(const std::vector<std::string>& fields);

  std::size_t columns_;
  std::string text_;
};

// Header row of column labels (or c0, c1, ...), then one row per matrix row.
// A non-empty `row_labels` adds a leading "label" column.
void export_matrix(const Matrix& m, const std::filesystem::path& path,
                   std::span<const std::string> column_labels = {},
                   std::span<const std::string> row_labels = {});

// Parses an RFC 4180 document into rows of fields.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace slab::io
