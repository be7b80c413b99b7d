#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slab/matrix.hpp"

namespace slab {

// Binary matrix stored as per-row sorted column lists (CSR without values).
// Every stored entry is 1; everything else is 0.
class SparseBinaryMatrix {
 public:
  SparseBinaryMatrix() = default;
  explicit SparseBinaryMatrix(std::size_t cols) : cols_(cols) {}
  SparseBinaryMatrix(std::size_t cols, std::vector<std::uint64_t> row_ptr,
                     std::vector<std::uint32_t> col_idx);

  // `columns` must be strictly increasing and < cols().
  void append_row(std::span<const std::uint32_t> columns);

  std::size_t rows() const { return row_ptr_.size() - 1; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return col_idx_.size(); }
  bool empty() const { return rows() == 0; }

  std::span<const std::uint32_t> row(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], col_idx_.data() + row_ptr_[r + 1]};
  }
  bool contains(std::size_t r, std::uint32_t col) const;

  const std::vector<std::uint64_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::uint32_t>& col_idx() const { return col_idx_; }

  // Per-column count of active rows.
  std::vector<std::uint64_t> column_counts() const;

  SparseBinaryMatrix select_rows(std::span<const std::size_t> rows) const;

  // Dense rows x cols copy; only sensible for small matrices or column subsets.
  Matrix to_dense() const;
  Matrix to_dense(std::span<const std::uint32_t> columns) const;
  static SparseBinaryMatrix from_dense(const Matrix& dense);

  bool operator==(const SparseBinaryMatrix&) const = default;

 private:
  std::size_t cols_ = 0;
  std::vector<std::uint64_t> row_ptr_{0};
  std::vector<std::uint32_t> col_idx_;
};

}  // namespace slab
