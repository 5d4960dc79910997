#include "mlkan/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "mlkan/engine.hpp"

namespace mlkan::problems {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

model::JetDirection dir(double dx, double dy, bool second) { return {{dx, dy}, second}; }

std::span<const double> as_span(const std::array<double, 2>& p) { return {p.data(), 2}; }

FieldGrid make_grid(double x0, double x1, double y0, double y1, int nx, int ny) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("fields: grid needs at least 2 x 2 points");
  FieldGrid g;
  g.x = linspace(x0, x1, nx);
  g.y = linspace(y0, y1, ny);
  g.value = linalg::DenseMatrix(ny, nx);
  g.residual = linalg::DenseMatrix(ny, nx, kNaN);
  g.reference = linalg::DenseMatrix(ny, nx, kNaN);
  return g;
}

}  // namespace

std::vector<double> linspace(double lo, double hi, int count) {
  if (count < 1) throw std::invalid_argument("linspace: count must be positive");
  std::vector<double> v(static_cast<std::size_t>(count));
  if (count == 1) {
    v[0] = lo;
    return v;
  }
  for (int i = 0; i < count; ++i) v[i] = lo + (hi - lo) * i / (count - 1);
  v.back() = hi;
  return v;
}

std::array<double, 2> rotate(double x, double y, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * x - s * y, s * x + c * y};
}

double relative_l2_error(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() != ref.size()) throw std::invalid_argument("relative_l2_error: shape mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += (pred[i] - ref[i]) * (pred[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  if (den == 0.0) throw std::domain_error("relative_l2_error: reference has zero norm");
  return std::sqrt(num / den);
}

// ----- regression -----

double regression_raw(double x, double y) {
  return std::cos(4.0 * kPi * x) + std::sin(kPi * y) + std::sin(2.0 * kPi * y) + std::abs(std::sin(3.0 * kPi * y * y));
}

RegressionProblem::RegressionProblem(const RegressionConfig& cfg) : cfg_(cfg) {
  if (cfg.samples < 2) throw std::invalid_argument("regression: need at least two samples");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(cfg.lo, cfg.hi);
  std::vector<double> raw;
  for (int s = 0; s < cfg.samples; ++s) {
    const double x = u(rng);
    const double y = u(rng);
    x_.push_back({x, y});
    const auto r = rotate(x, y, cfg.theta);
    raw.push_back(regression_raw(r[0], r[1]));
  }
  fmin_ = *std::min_element(raw.begin(), raw.end());
  fmax_ = *std::max_element(raw.begin(), raw.end());
  for (double f : raw) y_.push_back((f - fmin_) / (fmax_ - fmin_));
}

double RegressionProblem::target(double x, double y) const {
  const auto r = rotate(x, y, cfg_.theta);
  return (regression_raw(r[0], r[1]) - fmin_) / (fmax_ - fmin_);
}

multilevel::LossParts RegressionProblem::evaluate(const model::Network& net, std::span<double> grad) {
  model::Engine e(net);
  const double n = static_cast<double>(x_.size());
  double loss = 0.0;
  for (std::size_t s = 0; s < x_.size(); ++s) {
    e.forward(as_span(x_[s]));
    const double r = e.output()[0] - y_[s];
    loss += r * r;
    if (!grad.empty()) {
      const double adj = 2.0 * r / n;
      e.backward(std::span<const double>(&adj, 1), grad);
    }
  }
  multilevel::LossParts out;
  out.total = out.v = loss / n;
  return out;
}

// The loss is the MSE already; no separate metric.
double RegressionProblem::metric(const model::Network&) { return kNaN; }

FieldGrid RegressionProblem::fields(const model::Network& net, int nx, int ny) const {
  auto g = make_grid(cfg_.lo, cfg_.hi, cfg_.lo, cfg_.hi, nx, ny);
  model::Engine e(net);
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < nx; ++j) {
      const std::array<double, 2> p{g.x[j], g.y[i]};
      e.forward(as_span(p));
      g.value(i, j) = e.output()[0];
      g.reference(i, j) = target(p[0], p[1]);
      g.residual(i, j) = g.value(i, j) - g.reference(i, j);
    }
  }
  return g;
}

// ----- Poisson -----

double poisson_exact(double x, double y) {
  return x < 0.0 ? std::sin(kPi * x) * std::sin(3.0 * kPi * y) : std::sin(2.0 * kPi * x) * std::sin(3.0 * kPi * y);
}

double poisson_forcing(double x, double y, const PoissonConfig& cfg) {
  // laplacian of the left piece is -10 pi^2 u, of the right piece -13 pi^2 u
  if (x < 0.0) return -10.0 * kPi * kPi * cfg.eps_l * std::sin(kPi * x) * std::sin(3.0 * kPi * y);
  return -13.0 * kPi * kPi * cfg.eps_r * std::sin(2.0 * kPi * x) * std::sin(3.0 * kPi * y);
}

PoissonProblem::PoissonProblem(const PoissonConfig& cfg) : cfg_(cfg) {
  if (cfg.volume_side < 1 || cfg.boundary_points < 4 || cfg.interface_points < 1) {
    throw std::invalid_argument("poisson: point counts too small");
  }
  const int m = cfg.volume_side;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      v_.push_back({-1.0 + 2.0 * (j + 1) / (m + 1), -1.0 + 2.0 * (i + 1) / (m + 1)});
    }
  }
  // walk the perimeter counterclockwise from (-1, -1), equal arc spacing
  const int nb = cfg.boundary_points;
  for (int k = 0; k < nb; ++k) {
    const double s = 8.0 * k / nb;  // perimeter length 8
    const int side = static_cast<int>(s / 2.0);
    const double t = s - 2.0 * side - 1.0;
    switch (side) {
      case 0: b_.push_back({t, -1.0}); break;
      case 1: b_.push_back({1.0, t}); break;
      case 2: b_.push_back({-t, 1.0}); break;
      default: b_.push_back({-1.0, -t}); break;
    }
  }
  const int ni = cfg.interface_points;
  for (int k = 0; k < ni; ++k) iy_.push_back(-1.0 + 2.0 * (k + 1) / (ni + 1));
  rba_.lambda.assign(v_.size(), 1.0);
  rba_.mu = cfg.rba_mu;
}

multilevel::LossParts PoissonProblem::evaluate(const model::Network& net, std::span<double> grad) {
  const bool want = !grad.empty();
  const double cv = cfg_.gamma_v * (cfg_.mean_reduction ? 1.0 / v_.size() : 1.0);
  const double cb = cfg_.gamma_b * (cfg_.mean_reduction ? 1.0 / b_.size() : 1.0);
  const double ci = cfg_.gamma_i * (cfg_.mean_reduction ? 1.0 / iy_.size() : 1.0);

  double lv = 0.0, lb = 0.0, li = 0.0;
  if (want) last_residual_.assign(v_.size(), 0.0);
  {
    model::Engine e(net, {dir(1, 0, true), dir(0, 1, true)});
    std::vector<double> adj(5, 0.0);
    for (std::size_t k = 0; k < v_.size(); ++k) {
      e.forward(as_span(v_[k]));
      const auto o = e.output();  // u, ux, uxx, uy, uyy
      const double eps = v_[k][0] < 0.0 ? cfg_.eps_l : cfg_.eps_r;
      const double r = eps * (o[2] + o[4]) - poisson_forcing(v_[k][0], v_[k][1], cfg_);
      const double lam = rba_.lambda[k];
      lv += lam * r * r;
      if (want) {
        last_residual_[k] = std::abs(r);
        const double a = 2.0 * cv * lam * r * eps;
        adj[2] = a;
        adj[4] = a;
        e.backward(adj, grad);
      }
    }
  }
  {
    model::Engine e(net);
    for (const auto& p : b_) {
      e.forward(as_span(p));
      const double u = e.output()[0];
      lb += u * u;
      if (want) {
        const double a = 2.0 * cb * u;
        e.backward(std::span<const double>(&a, 1), grad);
      }
    }
  }
  {
    model::Engine e(net, {dir(1, 0, false)});
    std::vector<double> adj(3, 0.0);
    for (double y : iy_) {
      const std::array<double, 2> pl{-cfg_.offset, y}, pr{cfg_.offset, y};
      e.forward(as_span(pl));
      const double ul = e.output()[1];
      e.forward(as_span(pr));
      const double ur = e.output()[1];
      const double jump = cfg_.eps_l * ul - cfg_.eps_r * ur;
      li += jump * jump;
      if (want) {
        adj[1] = -2.0 * ci * jump * cfg_.eps_r;
        e.backward(adj, grad);
        e.forward(as_span(pl));
        adj[1] = 2.0 * ci * jump * cfg_.eps_l;
        e.backward(adj, grad);
      }
    }
  }
  multilevel::LossParts out;
  out.v = reduce(lv, v_.size());
  out.b = reduce(lb, b_.size());
  out.i = reduce(li, iy_.size());
  out.total = cfg_.gamma_v * out.v + cfg_.gamma_b * out.b + cfg_.gamma_i * out.i;
  return out;
}

double PoissonProblem::metric(const model::Network& net) {
  model::Engine e(net);
  std::vector<double> pred, ref;
  for (const auto& p : v_) {
    e.forward(as_span(p));
    pred.push_back(e.output()[0]);
    ref.push_back(poisson_exact(p[0], p[1]));
  }
  return relative_l2_error(pred, ref);
}

void PoissonProblem::after_step(const model::Network&) {
  if (cfg_.use_rba && last_residual_.size() == rba_.lambda.size()) optim::rba_update(rba_, last_residual_);
}

FieldGrid PoissonProblem::fields(const model::Network& net, int nx, int ny) const {
  auto g = make_grid(-1.0, 1.0, -1.0, 1.0, nx, ny);
  model::Engine e(net, {dir(1, 0, true), dir(0, 1, true)});
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < nx; ++j) {
      const std::array<double, 2> p{g.x[j], g.y[i]};
      e.forward(as_span(p));
      const auto o = e.output();
      const double eps = p[0] < 0.0 ? cfg_.eps_l : cfg_.eps_r;
      g.value(i, j) = o[0];
      g.residual(i, j) = eps * (o[2] + o[4]) - poisson_forcing(p[0], p[1], cfg_);
      g.reference(i, j) = poisson_exact(p[0], p[1]);
    }
  }
  return g;
}

// ----- Burgers -----

double burgers_initial(double x) { return -std::sin(kPi * x); }

BurgersProblem::BurgersProblem(const BurgersConfig& cfg) : cfg_(cfg) {
  if (cfg.nx < 2 || cfg.nt < 2 || cfg.ic_points < 2) throw std::invalid_argument("burgers: grid too small");
  const auto xs = linspace(-1.0, 1.0, cfg.nx);
  const auto ts = linspace(0.0, 1.0, cfg.nt);
  for (double t : ts)
    for (double x : xs) v_.push_back({x, t});
  ic_ = linspace(-1.0, 1.0, cfg.ic_points);
}

multilevel::LossParts BurgersProblem::evaluate(const model::Network& net, std::span<double> grad) {
  const bool want = !grad.empty();
  const double nv = static_cast<double>(v_.size()), nb = static_cast<double>(ic_.size());
  double lv = 0.0, lb = 0.0;
  {
    model::Engine e(net, {dir(1, 0, true), dir(0, 1, false)});
    std::vector<double> adj(5, 0.0);
    for (const auto& p : v_) {
      e.forward(as_span(p));
      const auto o = e.output();  // u, ux, uxx, ut, (utt)
      const double r = o[3] + o[0] * o[1] - cfg_.nu * o[2];
      lv += r * r;
      if (want) {
        const double a = 2.0 * cfg_.gamma_v * r / nv;
        adj[0] = a * o[1];
        adj[1] = a * o[0];
        adj[2] = -a * cfg_.nu;
        adj[3] = a;
        e.backward(adj, grad);
      }
    }
  }
  {
    model::Engine e(net);
    for (double x : ic_) {
      const std::array<double, 2> p{x, 0.0};
      e.forward(as_span(p));
      const double d = e.output()[0] - burgers_initial(x);
      lb += d * d;
      if (want) {
        const double a = 2.0 * cfg_.gamma_b * d / nb;
        e.backward(std::span<const double>(&a, 1), grad);
      }
    }
  }
  multilevel::LossParts out;
  out.v = lv / nv;
  out.b = lb / nb;
  out.total = cfg_.gamma_v * out.v + cfg_.gamma_b * out.b;
  return out;
}

FieldGrid BurgersProblem::fields(const model::Network& net, int nx, int ny) const {
  auto g = make_grid(-1.0, 1.0, 0.0, 1.0, nx, ny);
  model::Engine e(net, {dir(1, 0, true), dir(0, 1, false)});
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < nx; ++j) {
      const std::array<double, 2> p{g.x[j], g.y[i]};
      e.forward(as_span(p));
      const auto o = e.output();
      g.value(i, j) = o[0];
      g.residual(i, j) = o[3] + o[0] * o[1] - cfg_.nu * o[2];
    }
  }
  return g;
}

// ----- Allen-Cahn -----

double allen_cahn_initial(double x) { return x * x * std::cos(kPi * x); }

AllenCahnProblem::AllenCahnProblem(const AllenCahnConfig& cfg) : cfg_(cfg) {
  if (cfg.grid) {
    if (cfg.grid_side < 2) throw std::invalid_argument("allen-cahn: grid too small");
    const auto xs = linspace(-1.0, 1.0, cfg.grid_side);
    const auto ts = linspace(0.0, 1.0, cfg.grid_side);
    for (double t : ts)
      for (double x : xs) v_.push_back({x, t});
  } else {
    if (cfg.collocation < 1) throw std::invalid_argument("allen-cahn: need collocation points");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> ux(-1.0, 1.0), ut(0.0, 1.0);
    for (int k = 0; k < cfg.collocation; ++k) {
      const double x = ux(rng);
      const double t = ut(rng);
      v_.push_back({x, t});
    }
  }
  if (cfg.ic_points < 2) throw std::invalid_argument("allen-cahn: need initial condition points");
  ic_ = linspace(-1.0, 1.0, cfg.ic_points);
  rba_.lambda.assign(v_.size(), 1.0);
  rba_.mu = cfg.rba_mu;
}

multilevel::LossParts AllenCahnProblem::evaluate(const model::Network& net, std::span<double> grad) {
  const bool want = !grad.empty();
  const double nv = static_cast<double>(v_.size()), nb = static_cast<double>(ic_.size());
  const double k2 = cfg_.diffusion_sign * cfg_.eps;
  double lv = 0.0, lb = 0.0;
  if (want) last_residual_.assign(v_.size(), 0.0);
  {
    model::Engine e(net, {dir(1, 0, true), dir(0, 1, false)});
    std::vector<double> adj(5, 0.0);
    for (std::size_t k = 0; k < v_.size(); ++k) {
      e.forward(as_span(v_[k]));
      const auto o = e.output();  // u, ux, uxx, ut, (utt)
      const double u = o[0];
      const double r = o[3] + k2 * o[2] + 5.0 * u * u * u - 5.0 * u;
      const double lam = rba_.lambda[k];
      lv += lam * r * r;
      if (want) {
        last_residual_[k] = std::abs(r);
        const double a = 2.0 * cfg_.gamma_v * lam * r / nv;
        adj[0] = a * (15.0 * u * u - 5.0);
        adj[2] = a * k2;
        adj[3] = a;
        e.backward(adj, grad);
      }
    }
  }
  {
    model::Engine e(net);
    for (double x : ic_) {
      const std::array<double, 2> p{x, 0.0};
      e.forward(as_span(p));
      const double d = e.output()[0] - allen_cahn_initial(x);
      lb += d * d;
      if (want) {
        const double a = 2.0 * cfg_.gamma_b * d / nb;
        e.backward(std::span<const double>(&a, 1), grad);
      }
    }
  }
  multilevel::LossParts out;
  out.v = lv / nv;
  out.b = lb / nb;
  out.total = cfg_.gamma_v * out.v + cfg_.gamma_b * out.b;
  return out;
}

void AllenCahnProblem::after_step(const model::Network&) {
  if (cfg_.use_rba && last_residual_.size() == rba_.lambda.size()) optim::rba_update(rba_, last_residual_);
}

FieldGrid AllenCahnProblem::fields(const model::Network& net, int nx, int ny) const {
  auto g = make_grid(-1.0, 1.0, 0.0, 1.0, nx, ny);
  model::Engine e(net, {dir(1, 0, true), dir(0, 1, false)});
  const double k2 = cfg_.diffusion_sign * cfg_.eps;
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < nx; ++j) {
      const std::array<double, 2> p{g.x[j], g.y[i]};
      e.forward(as_span(p));
      const auto o = e.output();
      g.value(i, j) = o[0];
      g.residual(i, j) = o[3] + k2 * o[2] + 5.0 * o[0] * o[0] * o[0] - 5.0 * o[0];
    }
  }
  return g;
}

}  // namespace mlkan::problems
