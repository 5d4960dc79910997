#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mlkan::linalg {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  DenseMatrix transpose() const;
  double max_abs() const;
  double frobenius() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Upper triangular banded matrix. Diagonal d holds entries (i, i + d).
class BandedUpper {
 public:
  BandedUpper() = default;
  BandedUpper(std::size_t dim, std::size_t bandwidth);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t bandwidth() const noexcept { return diagonals_.size(); }

  /// Entry (i, j); zero outside the band.
  double at(std::size_t i, std::size_t j) const;
  /// Entry (i, i + offset); offset must be inside the band.
  double& band(std::size_t i, std::size_t offset) { return diagonals_[offset][i]; }
  double band(std::size_t i, std::size_t offset) const { return diagonals_[offset][i]; }

  const std::vector<double>& diagonal(std::size_t offset) const { return diagonals_[offset]; }

  void scale(double factor);
  DenseMatrix to_dense() const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::vector<double>> diagonals_;
};

struct SymEigDecomposition {
  std::vector<double> eigenvalues;  // ascending
  DenseMatrix eigenvectors;         // column k pairs with eigenvalues[k]
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x);

/// y = A x, or y = A^T x when `transpose` is set. Touches stored diagonals only.
std::vector<double> banded_matvec(const BandedUpper& a, std::span<const double> x,
                                  bool transpose = false);
/// Writes into `y` (same length as x); avoids allocation in hot loops.
void banded_matvec_into(const BandedUpper& a, std::span<const double> x, std::span<double> y,
                        bool transpose = false);

/// Solves A x = y (back substitution) or A^T x = y (forward substitution).
std::vector<double> banded_upper_solve(const BandedUpper& a, std::span<const double> y,
                                       bool transpose = false);

/// Gaussian elimination with partial pivoting for small dense systems.
std::vector<double> solve_dense(DenseMatrix a, std::span<const double> b);

/// Cyclic Jacobi eigensolver for symmetric matrices.
SymEigDecomposition sym_eig(const DenseMatrix& m);
/// Same algorithm carried out in extended (long double) precision. Used where
/// the spectrum spans more decades than double rounding can resolve.
SymEigDecomposition sym_eig_extended(const DenseMatrix& m);
/// Spectrum of a^T a, with the product itself accumulated in extended
/// precision (forming it in double loses eigenvalues below eps * lambda_max).
SymEigDecomposition gram_eig_extended(const DenseMatrix& a);

double max_singular_value(const DenseMatrix& m);

/// Centered 2D DFT magnitude spectrum; zero frequency at (rows/2, cols/2).
DenseMatrix dft2(const DenseMatrix& field);

}  // namespace mlkan::linalg
