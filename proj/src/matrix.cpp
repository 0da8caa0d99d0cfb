#include "regunet/matrix.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

namespace rgn {

namespace {

constexpr std::size_t kRowTile = 4;

#if defined(__AVX512F__)
constexpr std::size_t kColBlock = 16;  // two 8-lane accumulators per row
#elif defined(__AVX2__)
constexpr std::size_t kColBlock = 8;  // two 4-lane accumulators per row
#else
constexpr std::size_t kColBlock = 8;
#endif

// Generic micro kernel: C[r, j] accumulates sum_k A[r, k] * B[k, j] with a
// fixed k order and one fused-multiply-add chain per output element. The
// vector kernels below perform bitwise identical arithmetic per element
// (IEEE fma, same k order), so tile shape never changes a row's result.
inline void kernel_any(const double* A, std::size_t lda, const double* B,
                       std::size_t ldb, double* C, std::size_t ldc,
                       std::size_t nr, std::size_t K, std::size_t nj,
                       bool accumulate) {
  double acc[kRowTile][kColBlock];
  for (std::size_t r = 0; r < nr; ++r) {
    if (accumulate) {
      for (std::size_t j = 0; j < nj; ++j) acc[r][j] = C[r * ldc + j];
    } else {
      for (std::size_t j = 0; j < nj; ++j) acc[r][j] = 0.0;
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    const double* brow = B + k * ldb;
    for (std::size_t r = 0; r < nr; ++r) {
      const double a = A[r * lda + k];
      for (std::size_t j = 0; j < nj; ++j)
        acc[r][j] = std::fma(a, brow[j], acc[r][j]);
    }
  }
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t j = 0; j < nj; ++j) C[r * ldc + j] = acc[r][j];
}

#if defined(__AVX512F__)

inline void kernel_full(const double* A, std::size_t lda, const double* B,
                        std::size_t ldb, double* C, std::size_t ldc,
                        std::size_t K, bool accumulate) {
  __m512d c00, c01, c10, c11, c20, c21, c30, c31;
  if (accumulate) {
    c00 = _mm512_loadu_pd(C + 0 * ldc);
    c01 = _mm512_loadu_pd(C + 0 * ldc + 8);
    c10 = _mm512_loadu_pd(C + 1 * ldc);
    c11 = _mm512_loadu_pd(C + 1 * ldc + 8);
    c20 = _mm512_loadu_pd(C + 2 * ldc);
    c21 = _mm512_loadu_pd(C + 2 * ldc + 8);
    c30 = _mm512_loadu_pd(C + 3 * ldc);
    c31 = _mm512_loadu_pd(C + 3 * ldc + 8);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm512_setzero_pd();
  }
  for (std::size_t k = 0; k < K; ++k) {
    const __m512d b0 = _mm512_loadu_pd(B + k * ldb);
    const __m512d b1 = _mm512_loadu_pd(B + k * ldb + 8);
    __m512d a;
    a = _mm512_set1_pd(A[0 * lda + k]);
    c00 = _mm512_fmadd_pd(a, b0, c00);
    c01 = _mm512_fmadd_pd(a, b1, c01);
    a = _mm512_set1_pd(A[1 * lda + k]);
    c10 = _mm512_fmadd_pd(a, b0, c10);
    c11 = _mm512_fmadd_pd(a, b1, c11);
    a = _mm512_set1_pd(A[2 * lda + k]);
    c20 = _mm512_fmadd_pd(a, b0, c20);
    c21 = _mm512_fmadd_pd(a, b1, c21);
    a = _mm512_set1_pd(A[3 * lda + k]);
    c30 = _mm512_fmadd_pd(a, b0, c30);
    c31 = _mm512_fmadd_pd(a, b1, c31);
  }
  _mm512_storeu_pd(C + 0 * ldc, c00);
  _mm512_storeu_pd(C + 0 * ldc + 8, c01);
  _mm512_storeu_pd(C + 1 * ldc, c10);
  _mm512_storeu_pd(C + 1 * ldc + 8, c11);
  _mm512_storeu_pd(C + 2 * ldc, c20);
  _mm512_storeu_pd(C + 2 * ldc + 8, c21);
  _mm512_storeu_pd(C + 3 * ldc, c30);
  _mm512_storeu_pd(C + 3 * ldc + 8, c31);
}

#elif defined(__AVX2__)

inline void kernel_full(const double* A, std::size_t lda, const double* B,
                        std::size_t ldb, double* C, std::size_t ldc,
                        std::size_t K, bool accumulate) {
  __m256d c00, c01, c10, c11, c20, c21, c30, c31;
  if (accumulate) {
    c00 = _mm256_loadu_pd(C + 0 * ldc);
    c01 = _mm256_loadu_pd(C + 0 * ldc + 4);
    c10 = _mm256_loadu_pd(C + 1 * ldc);
    c11 = _mm256_loadu_pd(C + 1 * ldc + 4);
    c20 = _mm256_loadu_pd(C + 2 * ldc);
    c21 = _mm256_loadu_pd(C + 2 * ldc + 4);
    c30 = _mm256_loadu_pd(C + 3 * ldc);
    c31 = _mm256_loadu_pd(C + 3 * ldc + 4);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_pd();
  }
  for (std::size_t k = 0; k < K; ++k) {
    const __m256d b0 = _mm256_loadu_pd(B + k * ldb);
    const __m256d b1 = _mm256_loadu_pd(B + k * ldb + 4);
    __m256d a;
    a = _mm256_set1_pd(A[0 * lda + k]);
    c00 = _mm256_fmadd_pd(a, b0, c00);
    c01 = _mm256_fmadd_pd(a, b1, c01);
    a = _mm256_set1_pd(A[1 * lda + k]);
    c10 = _mm256_fmadd_pd(a, b0, c10);
    c11 = _mm256_fmadd_pd(a, b1, c11);
    a = _mm256_set1_pd(A[2 * lda + k]);
    c20 = _mm256_fmadd_pd(a, b0, c20);
    c21 = _mm256_fmadd_pd(a, b1, c21);
    a = _mm256_set1_pd(A[3 * lda + k]);
    c30 = _mm256_fmadd_pd(a, b0, c30);
    c31 = _mm256_fmadd_pd(a, b1, c31);
  }
  _mm256_storeu_pd(C + 0 * ldc, c00);
  _mm256_storeu_pd(C + 0 * ldc + 4, c01);
  _mm256_storeu_pd(C + 1 * ldc, c10);
  _mm256_storeu_pd(C + 1 * ldc + 4, c11);
  _mm256_storeu_pd(C + 2 * ldc, c20);
  _mm256_storeu_pd(C + 2 * ldc + 4, c21);
  _mm256_storeu_pd(C + 3 * ldc, c30);
  _mm256_storeu_pd(C + 3 * ldc + 4, c31);
}

#else

inline void kernel_full(const double* A, std::size_t lda, const double* B,
                        std::size_t ldb, double* C, std::size_t ldc,
                        std::size_t K, bool accumulate) {
  kernel_any(A, lda, B, ldb, C, ldc, kRowTile, K, kColBlock, accumulate);
}

#endif

}  // namespace

Matrix Matrix::from_rows(std::size_t rows, std::size_t cols,
                         std::vector<double> values) {
  if (values.size() != rows * cols)
    throw std::invalid_argument("Matrix::from_rows: size mismatch");
  Matrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.data_ = std::move(values);
  return m;
}

void Matrix::set_zero() { std::memset(data_.data(), 0, data_.size() * 8); }

ConstMatView view_of(const Matrix& m) {
  return ConstMatView{m.data(), m.rows(), m.cols()};
}

ConstMatView row_slice(const Matrix& m, std::size_t row_begin,
                       std::size_t rows) {
  if (row_begin + rows > m.rows())
    throw std::out_of_range("row_slice: out of range");
  return ConstMatView{m.row(row_begin), rows, m.cols()};
}

void gemm_nn(ConstMatView A, ConstMatView B, Matrix& C, bool accumulate) {
  const std::size_t M = A.rows, K = A.cols, N = B.cols;
  if (B.rows != K || C.rows() != M || C.cols() != N)
    throw std::invalid_argument("gemm_nn: shape mismatch");
  const std::size_t lda = A.cols, ldb = B.cols, ldc = C.cols();
  for (std::size_t j0 = 0; j0 < N; j0 += kColBlock) {
    const std::size_t nj = std::min(kColBlock, N - j0);
    std::size_t i = 0;
    if (nj == kColBlock) {
      for (; i + kRowTile <= M; i += kRowTile)
        kernel_full(A.data + i * lda, lda, B.data + j0, ldb,
                    C.data() + i * ldc + j0, ldc, K, accumulate);
    }
    for (; i < M; ++i)
      kernel_any(A.data + i * lda, lda, B.data + j0, ldb,
                 C.data() + i * ldc + j0, ldc, 1, K, nj, accumulate);
  }
}

void gemm_nn(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate) {
  gemm_nn(view_of(A), view_of(B), C, accumulate);
}

void gemm_tn(ConstMatView A, ConstMatView B, Matrix& C, bool accumulate) {
  const std::size_t M = A.rows, K = A.cols, N = B.cols;
  if (B.rows != M || C.rows() != K || C.cols() != N)
    throw std::invalid_argument("gemm_tn: shape mismatch");
  if (!accumulate) C.set_zero();
  // Rank-1 updates, four at a time. Each C element still receives its
  // contributions in strictly ascending m order (a 4-deep in-register fma
  // chain), so the result is bitwise identical to the one-row-at-a-time loop.
  const std::size_t lda = A.cols, ldb = B.cols;
  std::size_t m0 = 0;
  for (; m0 + 4 <= M; m0 += 4) {
    const double* a0 = A.data + (m0 + 0) * lda;
    const double* a1 = A.data + (m0 + 1) * lda;
    const double* a2 = A.data + (m0 + 2) * lda;
    const double* a3 = A.data + (m0 + 3) * lda;
    const double* b0 = B.data + (m0 + 0) * ldb;
    const double* b1 = B.data + (m0 + 1) * ldb;
    const double* b2 = B.data + (m0 + 2) * ldb;
    const double* b3 = B.data + (m0 + 3) * ldb;
    for (std::size_t k = 0; k < K; ++k) {
      double* crow = C.row(k);
      std::size_t j = 0;
#if defined(__AVX512F__)
      const __m512d av0 = _mm512_set1_pd(a0[k]);
      const __m512d av1 = _mm512_set1_pd(a1[k]);
      const __m512d av2 = _mm512_set1_pd(a2[k]);
      const __m512d av3 = _mm512_set1_pd(a3[k]);
      for (; j + 8 <= N; j += 8) {
        __m512d c = _mm512_loadu_pd(crow + j);
        c = _mm512_fmadd_pd(av0, _mm512_loadu_pd(b0 + j), c);
        c = _mm512_fmadd_pd(av1, _mm512_loadu_pd(b1 + j), c);
        c = _mm512_fmadd_pd(av2, _mm512_loadu_pd(b2 + j), c);
        c = _mm512_fmadd_pd(av3, _mm512_loadu_pd(b3 + j), c);
        _mm512_storeu_pd(crow + j, c);
      }
#elif defined(__AVX2__)
      const __m256d av0 = _mm256_set1_pd(a0[k]);
      const __m256d av1 = _mm256_set1_pd(a1[k]);
      const __m256d av2 = _mm256_set1_pd(a2[k]);
      const __m256d av3 = _mm256_set1_pd(a3[k]);
      for (; j + 4 <= N; j += 4) {
        __m256d c = _mm256_loadu_pd(crow + j);
        c = _mm256_fmadd_pd(av0, _mm256_loadu_pd(b0 + j), c);
        c = _mm256_fmadd_pd(av1, _mm256_loadu_pd(b1 + j), c);
        c = _mm256_fmadd_pd(av2, _mm256_loadu_pd(b2 + j), c);
        c = _mm256_fmadd_pd(av3, _mm256_loadu_pd(b3 + j), c);
        _mm256_storeu_pd(crow + j, c);
      }
#endif
      for (; j < N; ++j) {
        double c = crow[j];
        c = std::fma(a0[k], b0[j], c);
        c = std::fma(a1[k], b1[j], c);
        c = std::fma(a2[k], b2[j], c);
        c = std::fma(a3[k], b3[j], c);
        crow[j] = c;
      }
    }
  }
  for (; m0 < M; ++m0) {
    const double* arow = A.data + m0 * lda;
    const double* brow = B.data + m0 * ldb;
    for (std::size_t k = 0; k < K; ++k) {
      const double a = arow[k];
      double* crow = C.row(k);
      std::size_t j = 0;
#if defined(__AVX512F__)
      const __m512d av = _mm512_set1_pd(a);
      for (; j + 8 <= N; j += 8)
        _mm512_storeu_pd(crow + j,
                         _mm512_fmadd_pd(av, _mm512_loadu_pd(brow + j),
                                         _mm512_loadu_pd(crow + j)));
#elif defined(__AVX2__)
      const __m256d av = _mm256_set1_pd(a);
      for (; j + 4 <= N; j += 4)
        _mm256_storeu_pd(crow + j,
                         _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j),
                                         _mm256_loadu_pd(crow + j)));
#endif
      for (; j < N; ++j) crow[j] = std::fma(a, brow[j], crow[j]);
    }
  }
}

void gemm_tn(const Matrix& A, const Matrix& B, Matrix& C, bool accumulate) {
  gemm_tn(view_of(A), view_of(B), C, accumulate);
}

Matrix transposed(ConstMatView m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      t(j, i) = m.data[i * m.cols + j];
  return t;
}

Matrix transposed(const Matrix& m) { return transposed(view_of(m)); }

void add_row_vector(Matrix& m, const double* bias, std::size_t n) {
  if (n != m.cols())
    throw std::invalid_argument("add_row_vector: length mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* r = m.row(i);
    for (std::size_t j = 0; j < n; ++j) r[j] += bias[j];
  }
}

}  // namespace rgn
