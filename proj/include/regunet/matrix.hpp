#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rgn {

// Dense row-major float64 matrix. The numeric core of the whole toolkit;
// everything (features, activations, parameters, gradients) is one of these.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Matrix from_rows(std::size_t rows, std::size_t cols,
                          std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  void set_zero();
  void release() {
    rows_ = cols_ = 0;
    data_.clear();
    data_.shrink_to_fit();
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Contiguous row-major view, used to address row slices of a stored weight
// matrix (e.g. one input block of a fused first layer) without copying.
struct ConstMatView {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

ConstMatView view_of(const Matrix& m);
// Rows [row_begin, row_begin+rows) of m.
ConstMatView row_slice(const Matrix& m, std::size_t row_begin,
                       std::size_t rows);

// C = A * B, or C += A * B when accumulate is set.
//
// The kernel is row-covariant: output row i is produced by an arithmetic
// sequence (fixed k order, fused multiply-add, per-column accumulator chains)
// that does not depend on i or on how rows are tiled. Permuting the rows of A
// therefore permutes the rows of C bit-exactly, which the model layer relies
// on for exact permutation equivariance.
void gemm_nn(ConstMatView A, ConstMatView B, Matrix& C, bool accumulate);
void gemm_nn(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate);

// C = A^T * B (or +=). A: M x K, B: M x N, C: K x N. Used for weight
// gradients; deterministic (fixed m order), row covariance not required.
void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate);
void gemm_tn(ConstMatView A, ConstMatView B, Matrix& C, bool accumulate);

Matrix transposed(const Matrix& m);
Matrix transposed(ConstMatView m);

// out[i, :] += bias for every row.
void add_row_vector(Matrix& m, const double* bias, std::size_t n);

}  // namespace rgn
