#include "mlkan/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mlkan/basis.hpp"
#include "mlkan/engine.hpp"

namespace mlkan::analysis {

int count_sign_changes(std::span<const double> v, double floor) {
  double vmax = 0.0;
  for (double x : v) vmax = std::max(vmax, std::abs(x));
  if (vmax == 0.0) return 0;
  const double cut = floor * vmax;
  int count = 0;
  int prev = 0;
  for (double x : v) {
    if (std::abs(x) < cut) continue;
    const int s = x > 0.0 ? 1 : -1;
    if (prev != 0 && s != prev) ++count;
    prev = s;
  }
  return count;
}

namespace {

std::vector<double> ranks(std::span<const double> a) {
  std::vector<std::size_t> idx(a.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && a[idx[j + 1]] == a[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

void check_order(int r) {
  if (r < 1 || r > 8) throw std::invalid_argument("analysis: spline order out of range");
}

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

double binom(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
  return pearson(ranks(a), ranks(b));
}

EigenReport eigen_report(int r, int n) {
  check_order(r);
  if (n < 1) throw std::invalid_argument("eigen_report: n must be positive");
  // The ratio is scale free; the scaled matrix keeps entries O(1).
  const auto A = basis::build_cob(basis::make_uniform_knots(0.0, 1.0, n, r), true).matrix.to_dense();
  const auto eig = linalg::gram_eig_extended(A);
  EigenReport rep;
  rep.r = r;
  rep.n = n;
  rep.eigenvalues = eig.eigenvalues;
  const std::size_t m = A.cols();
  std::vector<double> col(m);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t i = 0; i < m; ++i) col[i] = eig.eigenvectors(i, k);
    rep.sign_changes.push_back(count_sign_changes(col));
  }
  rep.ratio = rep.eigenvalues.back() / rep.eigenvalues.front();
  if (m >= 2) {
    std::vector<double> index(m), counts(m);
    for (std::size_t k = 0; k < m; ++k) {
      index[k] = static_cast<double>(k);
      counts[k] = rep.sign_changes[k];
    }
    rep.spearman = spearman(index, counts);
  }
  return rep;
}

double ratio_scaling(int r, const std::vector<int>& ns) {
  if (ns.size() < 2) throw std::invalid_argument("ratio_scaling: need at least two sizes");
  std::vector<double> lx, ly;
  for (int n : ns) {
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(eigen_report(r, n).ratio));
  }
  const double k = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / k;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / k;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

double fd_stencil_check(int r, int n, double h) {
  check_order(r);
  if (n < r + 1) throw std::invalid_argument("fd_stencil_check: need n > r for interior rows");
  const auto k = basis::make_uniform_knots(0.0, h * n, n, r);
  const auto A = basis::build_cob(k).matrix;
  const double scale = 1.0 / (factorial(r - 1) * std::pow(h, r - 1));
  double dev_closed = 0.0, dev_fd = 0.0;
  const int m = static_cast<int>(A.dim());
  for (int i = 0; i + r < m; ++i) {
    double rowmax = 0.0, fdmax = 0.0;
    double e1 = 0.0, e2 = 0.0;
    for (int s = 0; s <= r; ++s) {
      const double a = A.at(static_cast<std::size_t>(i), static_cast<std::size_t>(i + s));
      const double expect = ((s % 2) ? -1.0 : 1.0) * binom(r, s) * scale;
      rowmax = std::max(rowmax, std::abs(expect));
      e1 = std::max(e1, std::abs(a - expect));
      // forward difference of the r-th derivative: (-1)^(r-s) binom(r, s) / h^r
      const double fd = (((r - s) % 2) ? -1.0 : 1.0) * binom(r, s) / std::pow(h, r);
      const double mapped = ((r % 2) ? -1.0 : 1.0) * factorial(r - 1) / h * a;
      fdmax = std::max(fdmax, std::abs(fd));
      e2 = std::max(e2, std::abs(mapped - fd));
    }
    for (int j = 0; j < m; ++j) {
      if (j >= i && j <= i + r) continue;
      e1 = std::max(e1, std::abs(A.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j))));
    }
    dev_closed = std::max(dev_closed, e1 / rowmax);
    dev_fd = std::max(dev_fd, e2 / fdmax);
  }
  return std::max(dev_closed, dev_fd);
}

SingularBound singular_bound_check(int r, int n) {
  check_order(r);
  const auto At = basis::build_cob(basis::make_uniform_knots(0.0, 1.0, n, r), true).matrix.to_dense();
  SingularBound out;
  out.sigma_max = linalg::max_singular_value(At);
  out.bound = std::ldexp(1.0, r) / factorial(r - 1);
  out.holds = out.sigma_max <= out.bound + 1e-9;
  return out;
}

NtkBound ntk_bound_check(const model::Network& net, const std::vector<std::vector<double>>& batch) {
  if (net.kind != model::NetKind::Kan) throw std::invalid_argument("ntk_bound_check: KAN network required");
  if (net.outputs() != 1) throw std::invalid_argument("ntk_bound_check: scalar output required");
  if (batch.empty()) throw std::invalid_argument("ntk_bound_check: empty batch");
  for (const auto& L : net.kan)
    if (!L.knots.is_uniform()) throw std::invalid_argument("ntk_bound_check: uniform knots required");

  model::Network relu = net;
  model::convert_network(relu, model::BasisMode::Relu);
  model::Network spline = net;
  model::convert_network(spline, model::BasisMode::Spline);

  const std::size_t np = model::param_count(net);
  const std::size_t k = batch.size();
  // per-parameter factor turning d/dw into d/dw~ with w~ = h^(r-1) w
  std::vector<double> scale;
  scale.reserve(np);
  for (const auto& L : relu.kan) {
    const double s = 1.0 / std::pow(L.knots.spacing(), L.knots.order() - 1);
    scale.insert(scale.end(), L.weights.size(), s);
  }

  auto jacobian = [&](const model::Network& m, bool rescale) {
    linalg::DenseMatrix J(k, np);
    model::Engine e(m);
    const double one = 1.0;
    for (std::size_t s = 0; s < k; ++s) {
      e.forward(batch[s]);
      auto row = J.row(s);
      e.backward(std::span<const double>(&one, 1), row);
      if (rescale)
        for (std::size_t p = 0; p < np; ++p) row[p] *= scale[p];
    }
    return J;
  };
  auto rho = [&](const linalg::DenseMatrix& J) {
    const auto G = linalg::matmul(J, J.transpose());
    return std::max(0.0, linalg::sym_eig(G).eigenvalues.back());
  };

  NtkBound out;
  out.rho_relu = rho(jacobian(relu, true));
  out.rho_spline = rho(jacobian(spline, false));
  out.ratio = out.rho_relu > 0.0 ? out.rho_spline / out.rho_relu : 0.0;
  out.holds = out.rho_spline <= 4.0 * out.rho_relu + 1e-6;
  return out;
}

SpectrumReport residual_spectrum(const linalg::DenseMatrix& field) {
  SpectrumReport rep;
  rep.field = field;
  rep.magnitude = linalg::dft2(field);
  const std::size_t rows = field.rows(), cols = field.cols();
  const std::size_t r0 = rows / 2, c0 = cols / 2;
  for (std::size_t j = 0; j < cols; ++j) {
    rep.omega_x.push_back(static_cast<double>(j) - static_cast<double>(c0));
    rep.cross_x.push_back(rep.magnitude(r0, j));
  }
  for (std::size_t i = 0; i < rows; ++i) {
    rep.omega_t.push_back(static_cast<double>(i) - static_cast<double>(r0));
    rep.cross_t.push_back(rep.magnitude(i, c0));
  }
  double e_freq = 0.0, e_space = 0.0;
  for (double m : rep.magnitude.data()) e_freq += m * m;
  for (double f : field.data()) e_space += f * f;
  rep.energy = e_freq / static_cast<double>(rows * cols);
  rep.parseval_error = e_space > 0.0 ? std::abs(rep.energy - e_space) / e_space : std::abs(rep.energy);
  return rep;
}

}  // namespace mlkan::analysis
