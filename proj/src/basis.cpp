#include "mlkan/basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mlkan::basis {

namespace {

double ipow(double x, int p) {
  double r = 1.0;
  for (int i = 0; i < p; ++i) r *= x;
  return r;
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace

KnotVector::KnotVector(int order, std::vector<double> knots)
    : order_(order), intervals_(0), uniform_(false), spacing_(0.0), knots_(std::move(knots)) {
  if (order_ < 1) throw std::invalid_argument("KnotVector: order must be >= 1");
  const int len = static_cast<int>(knots_.size());
  intervals_ = len - 2 * order_ + 1;
  if (intervals_ < 1) {
    throw std::invalid_argument("KnotVector: need at least 2r knots for order " +
                                std::to_string(order_));
  }
  for (int i = 0; i + 1 < len; ++i) {
    if (!(knots_[i] < knots_[i + 1])) {
      throw std::invalid_argument("KnotVector: knots must be strictly increasing (degenerate knot at " +
                                  std::to_string(i + first_index()) + ")");
    }
  }
  const double h = (upper() - lower()) / intervals_;
  uniform_ = true;
  for (int i = 0; i + 1 < len; ++i) {
    if (std::abs((knots_[i + 1] - knots_[i]) - h) > 1e-12 * std::max(1.0, std::abs(h))) {
      uniform_ = false;
      break;
    }
  }
  if (uniform_) spacing_ = h;
}

double KnotVector::spacing() const {
  if (!uniform_) throw std::logic_error("KnotVector::spacing: knots are not uniform");
  return spacing_;
}

int KnotVector::interval_of(double x) const {
  const int lo = first_index();
  const int hi = last_index();
  if (x < (*this)[lo]) return lo - 1;
  if (x > (*this)[hi]) return hi;
  if (x == upper()) return intervals_ - 1;
  if (x == (*this)[hi]) return hi;  // right end of the extended grid is open
  // First knot strictly greater than x.
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
  return static_cast<int>(it - knots_.begin()) - 1 + lo;
}

KnotVector make_uniform_knots(double a, double b, int n, int r) {
  if (!(a < b)) throw std::invalid_argument("make_uniform_knots: require a < b");
  if (n < 1) throw std::invalid_argument("make_uniform_knots: require n >= 1");
  if (r < 1) throw std::invalid_argument("make_uniform_knots: require r >= 1");
  const double h = (b - a) / n;
  std::vector<double> t;
  t.reserve(static_cast<std::size_t>(n + 2 * r - 1));
  for (int i = 1 - r; i <= n + r - 1; ++i) {
    if (i == 0) t.push_back(a);
    else if (i == n) t.push_back(b);
    else t.push_back(a + i * h);
  }
  return KnotVector(r, std::move(t));
}

double eval_bspline(const KnotVector& k, int i, double x) {
  const int r = k.order();
  if (i < k.first_index() || i > k.intervals() - 1) {
    throw std::out_of_range("eval_bspline: index " + std::to_string(i) + " out of range");
  }
  const int cell = k.interval_of(x);
  if (cell < i || cell > i + r - 1) return 0.0;
  // Order-1 values on intervals i .. i+r-1, then raise the order in place.
  double vals[16] = {};
  if (r > 16) throw std::invalid_argument("eval_bspline: order above 16 is not supported");
  vals[cell - i] = 1.0;
  for (int s = 2; s <= r; ++s) {
    for (int j = 0; j <= r - s; ++j) {
      const int idx = i + j;
      const double left = (x - k[idx]) / (k[idx + s - 1] - k[idx]) * vals[j];
      const double right = (k[idx + s] - x) / (k[idx + s] - k[idx + 1]) * vals[j + 1];
      vals[j] = left + right;
    }
  }
  return vals[0];
}

double eval_relu_power(const KnotVector& k, int i, double x) {
  if (i < k.first_index() || i > k.intervals() - 1) {
    throw std::out_of_range("eval_relu_power: index " + std::to_string(i) + " out of range");
  }
  const double z = x - k[i];
  if (k.order() == 1) return z >= 0.0 ? 1.0 : 0.0;
  return z > 0.0 ? ipow(z, k.order() - 1) : 0.0;
}

CobMatrix build_cob(const KnotVector& k, bool scaled) {
  const int r = k.order();
  const int dim = k.dim();
  const int base = k.first_index();
  // rows[i][d] = A^[s](i, i + d), d = 0..s
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(dim), std::vector<double>(r + 1, 0.0));
  for (int i = 0; i < dim; ++i) {
    rows[i][0] = 1.0;
    if (i + 1 < dim) rows[i][1] = -1.0;
  }
  for (int s = 2; s <= r; ++s) {
    std::vector<std::vector<double>> next(static_cast<std::size_t>(dim), std::vector<double>(r + 1, 0.0));
    for (int i = 0; i < dim; ++i) {
      const int ti = i + base;
      const double c1 = 1.0 / (k[ti + s - 1] - k[ti]);
      const double c2 = 1.0 / (k[ti + s] - k[ti + 1]);
      for (int d = 0; d <= s && i + d < dim; ++d) {
        double v = c1 * rows[i][d];
        if (i + 1 < dim && d >= 1) v -= c2 * rows[i + 1][d - 1];
        next[i][d] = v;
      }
    }
    rows = std::move(next);
  }
  CobMatrix out{linalg::BandedUpper(dim, std::min(r + 1, dim)), scaled};
  const double factor = scaled ? ipow(k.spacing(), r - 1) : 1.0;
  for (int i = 0; i < dim; ++i)
    for (int d = 0; d <= r && i + d < dim; ++d) out.matrix.band(i, d) = rows[i][d] * factor;
  return out;
}

CobMatrix cob_closed_form(const KnotVector& k, bool scaled) {
  const int r = k.order();
  const int dim = k.dim();
  const double h = k.spacing();
  const double lead = scaled ? static_cast<double>(r) : r / ipow(h, r - 1);
  CobMatrix out{linalg::BandedUpper(dim, std::min(r + 1, dim)), scaled};
  for (int i = 0; i < dim; ++i)
    for (int d = 0; d <= r && i + d < dim; ++d) {
      const double sign = (d % 2 == 0) ? 1.0 : -1.0;
      out.matrix.band(i, d) = sign * lead / (factorial(d) * factorial(r - d));
    }
  return out;
}

double verify_basis_identity(const KnotVector& k, int samples) {
  const CobMatrix a = build_cob(k);
  const int dim = k.dim();
  const int base = k.first_index();
  std::vector<double> psi(static_cast<std::size_t>(dim));
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    double x = samples == 1 ? k.lower() : k.lower() + (k.upper() - k.lower()) * s / (samples - 1.0);
    if (s == samples - 1) x = k.upper();
    for (int j = 0; j < dim; ++j) psi[j] = eval_relu_power(k, j + base, x);
    const auto combo = linalg::banded_matvec(a.matrix, psi);
    for (int i = 0; i < dim; ++i) {
      worst = std::max(worst, std::abs(eval_bspline(k, i + base, x) - combo[i]));
    }
  }
  return worst;
}

}  // namespace mlkan::basis
