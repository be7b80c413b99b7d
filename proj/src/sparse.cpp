#include "slab/sparse.hpp"

#include <algorithm>
#include <string>

#include "slab/error.hpp"

namespace slab {

SparseBinaryMatrix::SparseBinaryMatrix(std::size_t cols, std::vector<std::uint64_t> row_ptr,
                                       std::vector<std::uint32_t> col_idx)
    : cols_(cols), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)) {
  if (row_ptr_.empty() || row_ptr_.front() != 0 || row_ptr_.back() != col_idx_.size()) {
    throw FormatError("row pointer array inconsistent with column index array");
  }
  for (std::size_t r = 0; r + 1 < row_ptr_.size(); ++r) {
    if (row_ptr_[r] > row_ptr_[r + 1]) throw FormatError("row pointers must be non-decreasing");
    for (std::uint64_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      if (col_idx_[k] >= cols_) throw FormatError("column index out of range in row " + std::to_string(r));
      if (k > row_ptr_[r] && col_idx_[k] <= col_idx_[k - 1]) {
        throw FormatError("column indices not strictly increasing in row " + std::to_string(r));
      }
    }
  }
}

void SparseBinaryMatrix::append_row(std::span<const std::uint32_t> columns) {
  for (std::size_t k = 0; k < columns.size(); ++k) {
    SLAB_REQUIRE(columns[k] < cols_, "column index out of range");
    SLAB_REQUIRE(k == 0 || columns[k] > columns[k - 1], "row columns must be strictly increasing");
  }
  col_idx_.insert(col_idx_.end(), columns.begin(), columns.end());
  row_ptr_.push_back(col_idx_.size());
}

bool SparseBinaryMatrix::contains(std::size_t r, std::uint32_t col) const {
  const auto cols = row(r);
  return std::binary_search(cols.begin(), cols.end(), col);
}

std::vector<std::uint64_t> SparseBinaryMatrix::column_counts() const {
  std::vector<std::uint64_t> counts(cols_, 0);
  for (const auto c : col_idx_) ++counts[c];
  return counts;
}

SparseBinaryMatrix SparseBinaryMatrix::select_rows(std::span<const std::size_t> rows) const {
  SparseBinaryMatrix out(cols_);
  for (const auto r : rows) {
    SLAB_REQUIRE(r < this->rows(), "row index out of range");
    out.append_row(row(r));
  }
  return out;
}

Matrix SparseBinaryMatrix::to_dense() const {
  Matrix dense = Matrix::Zero(static_cast<Index>(rows()), static_cast<Index>(cols_));
  for (std::size_t r = 0; r < rows(); ++r) {
    for (const auto c : row(r)) dense(static_cast<Index>(r), c) = 1.0;
  }
  return dense;
}

Matrix SparseBinaryMatrix::to_dense(std::span<const std::uint32_t> columns) const {
  Matrix dense = Matrix::Zero(static_cast<Index>(rows()), static_cast<Index>(columns.size()));
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      if (contains(r, columns[k])) dense(static_cast<Index>(r), static_cast<Index>(k)) = 1.0;
    }
  }
  return dense;
}

SparseBinaryMatrix SparseBinaryMatrix::from_dense(const Matrix& dense) {
  SparseBinaryMatrix out(static_cast<std::size_t>(dense.cols()));
  std::vector<std::uint32_t> cols;
  for (Index r = 0; r < dense.rows(); ++r) {
    cols.clear();
    for (Index c = 0; c < dense.cols(); ++c) {
      const double v = dense(r, c);
      SLAB_REQUIRE(v == 0.0 || v == 1.0, "dense matrix is not binary");
      if (v == 1.0) cols.push_back(static_cast<std::uint32_t>(c));
    }
    out.append_row(cols);
  }
  return out;
}

}  // namespace slab
