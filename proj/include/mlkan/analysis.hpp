#pragma once

#include <cstdint>
#include <vector>

#include "mlkan/linalg.hpp"
#include "mlkan/model.hpp"

namespace mlkan::analysis {

struct EigenReport {
  int r = 0;
  int n = 0;
  std::vector<double> eigenvalues;  // ascending
  std::vector<int> sign_changes;    // per eigenvector, same order
  double ratio = 0.0;               // lambda_max / lambda_min
  double spearman = 0.0;            // rank correlation of index vs sign changes
};

/// Strict sign alternations in v, skipping entries below floor * max|v|.
int count_sign_changes(std::span<const double> v, double floor = 1e-12);
/// Spearman correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// Spectrum of A^T A for uniform A^[r] on [0, 1] with n intervals. Solved in
/// extended precision.
EigenReport eigen_report(int r, int n);

/// Least-squares slope of log(ratio) against log(n).
double ratio_scaling(int r, const std::vector<int>& ns);

/// Interior rows of A^[r] on uniform knots with spacing h against
/// (-1)^(j-i) binom(r, j-i) / ((r-1)! h^(r-1)), and the same rows rescaled
/// by (-1)^r (r-1)! / h against the forward difference stencil of the r-th
/// derivative. Deviations are relative to the largest stencil entry.
double fd_stencil_check(int r, int n, double h = 1.0);

struct SingularBound {
  double sigma_max = 0.0;
  double bound = 0.0;  // 2^r / (r-1)!
  bool holds = false;
};

/// sigma_max of h^(r-1) A^[r] on uniform knots against the generating
/// function bound (tolerance 1e-9).
SingularBound singular_bound_check(int r, int n);

struct NtkBound {
  double rho_spline = 0.0;
  double rho_relu = 0.0;
  double ratio = 0.0;  // rho_spline / rho_relu (0 when rho_relu is 0)
  bool holds = false;  // rho_spline <= 4 rho_relu + 1e-6
};

/// Gram matrices J J^T of the network output with respect to the normalized
/// ReLU weights (psi / h^(r-1)) and with respect to the spline weights.
NtkBound ntk_bound_check(const model::Network& net, const std::vector<std::vector<double>>& batch);

struct SpectrumReport {
  linalg::DenseMatrix field;      // rows: t, cols: x
  linalg::DenseMatrix magnitude;  // centered, zero frequency at (rows/2, cols/2)
  std::vector<double> omega_x;    // integer frequencies, cols
  std::vector<double> omega_t;    // rows
  std::vector<double> cross_x;    // |F| along omega_t = 0
  std::vector<double> cross_t;    // |F| along omega_x = 0
  double energy = 0.0;            // sum |F|^2 / (rows * cols)
  double parseval_error = 0.0;    // relative to sum f^2
};

SpectrumReport residual_spectrum(const linalg::DenseMatrix& field);

}  // namespace mlkan::analysis
