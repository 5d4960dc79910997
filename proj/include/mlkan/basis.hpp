#pragma once

#include <span>
#include <vector>

#include "mlkan/linalg.hpp"

namespace mlkan::basis {

/// Strictly increasing extended knot set t_{1-r} ... t_{n+r-1} for splines of
/// order r on [a, b] = [t_0, t_n]. Indices passed to the accessors use that
/// (possibly negative) numbering.
class KnotVector {
 public:
  /// `knots` must hold n + 2r - 1 strictly increasing values.
  KnotVector(int order, std::vector<double> knots);

  int order() const noexcept { return order_; }
  int intervals() const noexcept { return intervals_; }
  /// Number of basis functions, n + r - 1.
  int dim() const noexcept { return intervals_ + order_ - 1; }
  int first_index() const noexcept { return 1 - order_; }
  int last_index() const noexcept { return intervals_ + order_ - 1; }

  double operator[](int i) const { return knots_[static_cast<std::size_t>(i - first_index())]; }
  double lower() const { return (*this)[0]; }
  double upper() const { return (*this)[intervals_]; }

  bool is_uniform() const noexcept { return uniform_; }
  /// Knot spacing h; throws for nonuniform knots.
  double spacing() const;

  const std::vector<double>& values() const noexcept { return knots_; }

  /// Index j of the order-1 interval containing x, following the half-open
  /// convention with [t_{n-1}, t_n] closed. Returns `first_index() - 1` when x
  /// lies left of every knot interval and `last_index()` when it lies right.
  int interval_of(double x) const;

 private:
  int order_;
  int intervals_;
  bool uniform_;
  double spacing_;
  std::vector<double> knots_;
};

KnotVector make_uniform_knots(double a, double b, int n, int r);

/// b_i^[r](x) by the Cox-de Boor recursion; zero outside [t_{1-r}, t_{n+r-1}].
double eval_bspline(const KnotVector& k, int i, double x);
/// psi_i^[r](x) = max(x - t_i, 0)^(r-1); for r = 1 the step 1{x >= t_i}.
double eval_relu_power(const KnotVector& k, int i, double x);

/// Change-of-basis matrix with B_S = A B_R. Row/column k corresponds to basis
/// index k + first_index(). When `scaled`, entries are multiplied by h^(r-1).
struct CobMatrix {
  linalg::BandedUpper matrix;
  bool scaled = false;

  int dim() const { return static_cast<int>(matrix.dim()); }
};

/// Builds A^[r] from the order recurrence, starting at the bidiagonal A^[1].
CobMatrix build_cob(const KnotVector& k, bool scaled = false);
/// Closed-form uniform-knot entries (-1)^(j-i) r / ((j-i)! (r-j+i)! h^(r-1)).
CobMatrix cob_closed_form(const KnotVector& k, bool scaled = false);

/// max over basis index and `samples` grid points in [a, b] of
/// |b_i(x) - sum_j A_ij psi_j(x)|.
double verify_basis_identity(const KnotVector& k, int samples = 200);

}  // namespace mlkan::basis
