#include "slab/export.hpp"

#include <cmath>
#include <cstdio>

#include "slab/binary_io.hpp"
#include "slab/error.hpp"

namespace slab::io {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(std::string_view raw) {
  if (raw.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(raw);
  std::string out = "\"";
  for (const char ch : raw) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  SLAB_REQUIRE(columns_ >= 1, "CSV needs at least one column");
  line(header);
}

CsvWriter& CsvWriter::row(std::vector<std::string> fields) {
  SLAB_REQUIRE(fields.size() == columns_, "CSV row width differs from header");
  line(fields);
  return *this;
}

void CsvWriter::line(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) text_.push_back(',');
    text_ += csv_field(fields[i]);
  }
  text_ += "\r\n";
}

void CsvWriter::save(const std::filesystem::path& path) const {
  BinaryWriter w;
  w.bytes(text_);
  w.save(path);
}

void export_matrix(const Matrix& m, const std::filesystem::path& path,
                   std::span<const std::string> column_labels,
                   std::span<const std::string> row_labels) {
  SLAB_REQUIRE(column_labels.empty() || column_labels.size() == static_cast<std::size_t>(m.cols()),
               "one column label per matrix column required");
  SLAB_REQUIRE(row_labels.empty() || row_labels.size() == static_cast<std::size_t>(m.rows()),
               "one row label per matrix row required");
  if (!m.allFinite()) throw ContractError("cannot export a matrix with non-finite entries");
  std::vector<std::string> header;
  if (!row_labels.empty()) header.emplace_back("label");
  for (Index j = 0; j < m.cols(); ++j) {
    header.push_back(column_labels.empty() ? "c" + std::to_string(j)
                                           : column_labels[static_cast<std::size_t>(j)]);
  }
  CsvWriter csv(std::move(header));
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> fields;
    if (!row_labels.empty()) fields.push_back(row_labels[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < m.cols(); ++j) fields.push_back(format_double(m(i, j)));
    csv.row(std::move(fields));
  }
  csv.save(path);
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (ch == '\n') {
      fields.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(fields));
      fields.clear();
      any = false;
    } else {
      field.push_back(ch);
      any = true;
    }
  }
  if (quoted) throw FormatError("unterminated quoted CSV field");
  if (any) {
    fields.push_back(std::move(field));
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace slab::io
