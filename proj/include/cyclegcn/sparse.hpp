#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyclegcn {

using Index = Eigen::Index;

/// Compressed sparse row matrix.
///
/// Invariants: row_offsets has rows + 1 non-decreasing entries, column indices
/// are strictly increasing within each row, and no explicit zero is stored.
template <typename Scalar>
class SparseMatrix {
 public:
  struct Triplet {
    Index row;
    Index col;
    Scalar value;
  };

  using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  SparseMatrix() : row_offsets_(1, 0) {}

  SparseMatrix(Index rows, Index cols, std::vector<Index> row_offsets,
               std::vector<Index> column_indices, std::vector<Scalar> values)
      : rows_(rows),
        cols_(cols),
        row_offsets_(std::move(row_offsets)),
        column_indices_(std::move(column_indices)),
        values_(std::move(values)) {
    validate();
  }

  /// Duplicate coordinates are summed; entries that end up exactly zero are
  /// dropped.
  static SparseMatrix from_triplets(Index rows, Index cols, std::vector<Triplet> triplets) {
    if (rows < 0 || cols < 0) {
      throw std::invalid_argument("sparse matrix dimensions must be non-negative");
    }
    for (const auto& t : triplets) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols) {
        throw std::invalid_argument("triplet (" + std::to_string(t.row) + ", " +
                                    std::to_string(t.col) + ") outside matrix bounds");
      }
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<Index> offsets(static_cast<std::size_t>(rows) + 1, 0);
    std::vector<Index> columns;
    std::vector<Scalar> values;
    columns.reserve(triplets.size());
    values.reserve(triplets.size());
    std::size_t k = 0;
    for (Index r = 0; r < rows; ++r) {
      while (k < triplets.size() && triplets[k].row == r) {
        const Index c = triplets[k].col;
        Scalar sum = 0;
        while (k < triplets.size() && triplets[k].row == r && triplets[k].col == c) {
          sum += triplets[k].value;
          ++k;
        }
        if (sum != Scalar(0)) {
          columns.push_back(c);
          values.push_back(sum);
        }
      }
      offsets[static_cast<std::size_t>(r) + 1] = static_cast<Index>(columns.size());
    }
    return SparseMatrix(rows, cols, std::move(offsets), std::move(columns), std::move(values));
  }

  static SparseMatrix identity(Index n) {
    std::vector<Index> offsets(static_cast<std::size_t>(n) + 1);
    std::vector<Index> columns(static_cast<std::size_t>(n));
    for (Index i = 0; i <= n; ++i) offsets[static_cast<std::size_t>(i)] = i;
    for (Index i = 0; i < n; ++i) columns[static_cast<std::size_t>(i)] = i;
    return SparseMatrix(n, n, std::move(offsets), std::move(columns),
                        std::vector<Scalar>(static_cast<std::size_t>(n), Scalar(1)));
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index nonzeros() const { return static_cast<Index>(values_.size()); }

  std::span<const Index> row_offsets() const { return row_offsets_; }
  std::span<const Index> column_indices() const { return column_indices_; }
  std::span<const Scalar> values() const { return values_; }

  Scalar coeff(Index row, Index col) const {
    const auto begin = column_indices_.begin() + row_offsets_[static_cast<std::size_t>(row)];
    const auto end = column_indices_.begin() + row_offsets_[static_cast<std::size_t>(row) + 1];
    const auto it = std::lower_bound(begin, end, col);
    if (it == end || *it != col) return Scalar(0);
    return values_[static_cast<std::size_t>(it - column_indices_.begin())];
  }

  DenseMatrix to_dense() const {
    DenseMatrix dense = DenseMatrix::Zero(rows_, cols_);
    for (Index r = 0; r < rows_; ++r) {
      for (Index k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
        dense(r, column_indices_[k]) = values_[k];
      }
    }
    return dense;
  }

  Scalar max_asymmetry() const {
    if (rows_ != cols_) {
      throw std::invalid_argument("asymmetry is defined for square matrices only");
    }
    Scalar worst = 0;
    for (Index r = 0; r < rows_; ++r) {
      for (Index k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
        const Index c = column_indices_[k];
        worst = std::max(worst, std::abs(values_[k] - coeff(c, r)));
      }
    }
    return worst;
  }

 private:
  void validate() const {
    if (rows_ < 0 || cols_ < 0) {
      throw std::invalid_argument("sparse matrix dimensions must be non-negative");
    }
    if (row_offsets_.size() != static_cast<std::size_t>(rows_) + 1 || row_offsets_.front() != 0) {
      throw std::invalid_argument("row_offsets must have rows + 1 entries starting at 0");
    }
    if (column_indices_.size() != values_.size() ||
        static_cast<Index>(values_.size()) != row_offsets_.back()) {
      throw std::invalid_argument("column_indices/values length does not match row_offsets");
    }
    for (Index r = 0; r < rows_; ++r) {
      const Index begin = row_offsets_[r];
      const Index end = row_offsets_[r + 1];
      if (end < begin) throw std::invalid_argument("row_offsets must be non-decreasing");
      for (Index k = begin; k < end; ++k) {
        const Index c = column_indices_[k];
        if (c < 0 || c >= cols_) throw std::invalid_argument("column index out of range");
        if (k > begin && column_indices_[k - 1] >= c) {
          throw std::invalid_argument("column indices must be strictly increasing within a row");
        }
        if (values_[k] == Scalar(0)) throw std::invalid_argument("explicit zero stored");
      }
    }
  }

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_offsets_;
  std::vector<Index> column_indices_;
  std::vector<Scalar> values_;
};

/// Sparse-dense product s * d.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> spmm(const SparseMatrix<Scalar>& s,
                                                           const Eigen::MatrixBase<Derived>& d) {
  if (s.cols() != d.rows()) {
    throw std::invalid_argument("spmm dimension mismatch: sparse has " + std::to_string(s.cols()) +
                                " columns, dense has " + std::to_string(d.rows()) + " rows");
  }
  const auto offsets = s.row_offsets();
  const auto columns = s.column_indices();
  const auto values = s.values();
  const auto& dense = d.derived();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(s.rows(), d.cols());
  for (Index c = 0; c < d.cols(); ++c) {
    for (Index r = 0; r < s.rows(); ++r) {
      Scalar acc = 0;
      for (Index k = offsets[r]; k < offsets[r + 1]; ++k) {
        acc += values[k] * dense(columns[k], c);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace cyclegcn
