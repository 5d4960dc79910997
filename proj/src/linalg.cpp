#include "mlkan/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mlkan::linalg {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("DenseMatrix: data length does not match shape");
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
  DenseMatrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double DenseMatrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double DenseMatrix::frobenius() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

BandedUpper::BandedUpper(std::size_t dim, std::size_t bandwidth) : dim_(dim) {
  if (bandwidth == 0 || bandwidth > dim) {
    throw std::invalid_argument("BandedUpper: bandwidth must be in [1, dim]");
  }
  diagonals_.resize(bandwidth);
  for (std::size_t d = 0; d < bandwidth; ++d) diagonals_[d].assign(dim - d, 0.0);
}

double BandedUpper::at(std::size_t i, std::size_t j) const {
  if (j < i || j - i >= diagonals_.size() || j >= dim_) return 0.0;
  return diagonals_[j - i][i];
}

void BandedUpper::scale(double factor) {
  for (auto& diag : diagonals_)
    for (double& v : diag) v *= factor;
}

DenseMatrix BandedUpper::to_dense() const {
  DenseMatrix m(dim_, dim_);
  for (std::size_t d = 0; d < diagonals_.size(); ++d)
    for (std::size_t i = 0; i + d < dim_; ++i) m(i, i + d) = diagonals_[d][i];
  return m;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: dimension mismatch (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + ")");
  }
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * x[k];
    y[i] = s;
  }
  return y;
}

void banded_matvec_into(const BandedUpper& a, std::span<const double> x, std::span<double> y,
                        bool transpose) {
  const std::size_t n = a.dim();
  if (x.size() != n || y.size() != n) {
    throw std::invalid_argument("banded_matvec: length mismatch");
  }
  const std::size_t bw = a.bandwidth();
  if (!transpose) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      const std::size_t dmax = std::min(bw, n - i);
      for (std::size_t d = 0; d < dmax; ++d) s += a.band(i, d) * x[i + d];
      y[i] = s;
    }
  } else {
    // (A^T x)_j = sum_d A(j - d, j) x[j - d]
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      const std::size_t dmax = std::min(bw, j + 1);
      for (std::size_t d = 0; d < dmax; ++d) s += a.band(j - d, d) * x[j - d];
      y[j] = s;
    }
  }
}

std::vector<double> banded_matvec(const BandedUpper& a, std::span<const double> x,
                                  bool transpose) {
  std::vector<double> y(a.dim());
  banded_matvec_into(a, x, y, transpose);
  return y;
}

std::vector<double> banded_upper_solve(const BandedUpper& a, std::span<const double> y,
                                       bool transpose) {
  const std::size_t n = a.dim();
  if (y.size() != n) throw std::invalid_argument("banded_upper_solve: length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (a.band(i, 0) == 0.0) {
      throw std::domain_error("banded_upper_solve: singular matrix (zero diagonal at row " +
                              std::to_string(i) + ")");
    }
  }
  const std::size_t bw = a.bandwidth();
  std::vector<double> x(n, 0.0);
  if (!transpose) {
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      const std::size_t dmax = std::min(bw, n - ii);
      for (std::size_t d = 1; d < dmax; ++d) s -= a.band(ii, d) * x[ii + d];
      x[ii] = s / a.band(ii, 0);
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      double s = y[j];
      const std::size_t dmax = std::min(bw, j + 1);
      for (std::size_t d = 1; d < dmax; ++d) s -= a.band(j - d, d) * x[j - d];
      x[j] = s / a.band(j, 0);
    }
  }
  return x;
}

namespace {

void check_symmetric(const DenseMatrix& m) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw std::invalid_argument("sym_eig: matrix must be square");
  if (n == 0) throw std::invalid_argument("sym_eig: empty matrix");
  const double scale = m.max_abs();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-12 * scale) {
        throw std::invalid_argument("sym_eig: matrix is not symmetric");
      }
}

template <class T>
std::vector<T> symmetrized(const DenseMatrix& m) {
  const std::size_t n = m.rows();
  std::vector<T> a(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = T(0.5) * (T(m(i, j)) + T(m(j, i)));
  return a;
}

// `a` is a symmetric n x n matrix, row-major.
template <class T>
SymEigDecomposition jacobi(std::vector<T> a, std::size_t n, T tolerance) {
  std::vector<T> v(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = T(1);
  T total = 0;
  for (T x : a) total += x * x;
  const T threshold = tolerance * std::sqrt(total);

  auto off_norm = [&] {
    T s = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += a[i * n + j] * a[i * n + j];
    return std::sqrt(s);
  };

  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    if (off_norm() <= threshold) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const T apq = a[p * n + q];
        if (apq == T(0)) continue;
        const T app = a[p * n + p];
        const T aqq = a[q * n + q];
        const T theta = (aqq - app) / (T(2) * apq);
        const T t = (theta >= 0 ? T(1) : T(-1)) / (std::abs(theta) + std::sqrt(theta * theta + T(1)));
        const T c = T(1) / std::sqrt(t * t + T(1));
        const T s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const T akp = a[k * n + p];
          const T akq = a[k * n + q];
          const T nkp = c * akp - s * akq;
          const T nkq = s * akp + c * akq;
          a[k * n + p] = a[p * n + k] = nkp;
          a[k * n + q] = a[q * n + k] = nkq;
        }
        a[p * n + p] = app - t * apq;
        a[q * n + q] = aqq + t * apq;
        a[p * n + q] = a[q * n + p] = T(0);
        for (std::size_t k = 0; k < n; ++k) {
          const T vkp = v[k * n + p];
          const T vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == kMaxSweeps && off_norm() > threshold) {
    throw std::runtime_error("sym_eig: Jacobi iteration did not converge in 100 sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * n + i] < a[j * n + j]; });
  SymEigDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = DenseMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.eigenvalues[k] = static_cast<double>(a[src * n + src]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = static_cast<double>(v[i * n + src]);
  }
  return out;
}

}  // namespace

SymEigDecomposition sym_eig(const DenseMatrix& m) {
  check_symmetric(m);
  return jacobi<double>(symmetrized<double>(m), m.rows(), 1e-12);
}

SymEigDecomposition sym_eig_extended(const DenseMatrix& m) {
  check_symmetric(m);
  return jacobi<long double>(symmetrized<long double>(m), m.rows(), 1e-18L);
}

SymEigDecomposition gram_eig_extended(const DenseMatrix& a) {
  const std::size_t n = a.cols();
  if (n == 0 || a.rows() == 0) throw std::invalid_argument("gram_eig_extended: empty matrix");
  std::vector<long double> g(n * n, 0.0L);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto row = a.row(k);
    for (std::size_t i = 0; i < n; ++i) {
      if (row[i] == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += static_cast<long double>(row[i]) * row[j];
    }
  }
  return jacobi<long double>(std::move(g), n, 1e-18L);
}

double max_singular_value(const DenseMatrix& m) {
  if (m.empty()) throw std::invalid_argument("max_singular_value: empty matrix");
  const DenseMatrix gram = matmul(m.transpose(), m);
  const auto eig = sym_eig(gram);
  return std::sqrt(std::max(eig.eigenvalues.back(), 0.0));
}

namespace {

using cplx = std::complex<double>;

// In-place DFT of a strided sequence. Radix-2 when the length allows it.
void dft_line(std::vector<cplx>& line) {
  const std::size_t n = line.size();
  if (n <= 1) return;
  if ((n & (n - 1)) == 0) {
    for (std::size_t i = 1, j = 0; i < n; ++i) {
      std::size_t bit = n >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(line[i], line[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
      for (std::size_t i = 0; i < n; i += len) {
        for (std::size_t k = 0; k < len / 2; ++k) {
          const cplx w = std::polar(1.0, ang * static_cast<double>(k));
          const cplx u = line[i + k];
          const cplx t = w * line[i + k + len / 2];
          line[i + k] = u + t;
          line[i + k + len / 2] = u - t;
        }
      }
    }
    return;
  }
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) /
                         static_cast<double>(n);
      s += line[j] * std::polar(1.0, ang);
    }
    out[k] = s;
  }
  line = std::move(out);
}

}  // namespace

DenseMatrix dft2(const DenseMatrix& field) {
  if (field.empty()) throw std::invalid_argument("dft2: empty field");
  const std::size_t rows = field.rows();
  const std::size_t cols = field.cols();
  std::vector<cplx> grid(rows * cols);
  for (std::size_t i = 0; i < rows * cols; ++i) grid[i] = field.data()[i];

  std::vector<cplx> line(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) line[j] = grid[i * cols + j];
    dft_line(line);
    for (std::size_t j = 0; j < cols; ++j) grid[i * cols + j] = line[j];
  }
  line.assign(rows, 0.0);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) line[i] = grid[i * cols + j];
    dft_line(line);
    for (std::size_t i = 0; i < rows; ++i) grid[i * cols + j] = line[i];
  }

  DenseMatrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t si = (i + rows / 2) % rows;
      const std::size_t sj = (j + cols / 2) % cols;
      out(si, sj) = std::abs(grid[i * cols + j]);
    }
  return out;
}

std::vector<double> solve_dense(DenseMatrix a, std::span<const double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) throw std::invalid_argument("solve_dense: shape mismatch");
  std::vector<double> x(b.begin(), b.end());
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (a(piv, k) == 0.0) throw std::domain_error("solve_dense: singular matrix");
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(x[k], x[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      x[i] -= f * x[k];
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    double s = x[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a(k, j) * x[j];
    x[k] = s / a(k, k);
  }
  return x;
}

}  // namespace mlkan::linalg
