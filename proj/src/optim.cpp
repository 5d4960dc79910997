#include "mlkan/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mlkan::optim {

void check_finite(std::span<const double> v, const char* where) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw std::runtime_error(std::string(where) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

namespace {

void require_same(std::size_t a, std::size_t b, const char* where) {
  if (a != b) throw std::invalid_argument(std::string(where) + ": size mismatch");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

void sgd_step(std::span<double> params, std::span<const double> grad, double lr) {
  require_same(params.size(), grad.size(), "sgd_step");
  check_finite(grad, "sgd_step gradient");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

// ----- Adam -----

Adam::Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

void Adam::reset() {
  std::fill(m_.begin(), m_.end(), 0.0);
  std::fill(v_.begin(), v_.end(), 0.0);
  t_ = 0;
}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  require_same(params.size(), m_.size(), "Adam::step");
  require_same(grad.size(), m_.size(), "Adam::step");
  check_finite(grad, "Adam::step gradient");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double decay = 1.0 - lr * cfg_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double mh = m_[i] / bc1;
    const double vh = v_[i] / bc2;
    params[i] *= decay;
    params[i] -= lr * mh / (std::sqrt(vh) + cfg_.eps);
  }
  check_finite(params, "Adam::step parameters");
}

std::vector<double> Adam::diagonal() const {
  std::vector<double> d(v_.size(), 1.0);
  if (t_ == 0) return d;
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 1.0 / (std::sqrt(v_[i] / bc2) + cfg_.eps);
  return d;
}

// ----- L-BFGS -----

Lbfgs::Lbfgs(std::size_t n, LbfgsConfig cfg) : cfg_(cfg), n_(n) {
  if (cfg_.history == 0) throw std::invalid_argument("Lbfgs: history must be positive");
}

void Lbfgs::reset() {
  s_.clear();
  y_.clear();
  rho_.clear();
  cached_ = false;
  iters_ = 0;
}

std::vector<double> Lbfgs::direction(std::span<const double> g) const {
  std::vector<double> q(g.begin(), g.end());
  const std::size_t k = s_.size();
  std::vector<double> alpha(k);
  for (std::size_t i = k; i-- > 0;) {
    alpha[i] = rho_[i] * dot(s_[i], q);
    for (std::size_t j = 0; j < n_; ++j) q[j] -= alpha[i] * y_[i][j];
  }
  if (k > 0) {
    const double gamma = dot(s_.back(), y_.back()) / dot(y_.back(), y_.back());
    for (double& v : q) v *= gamma;
  }
  for (std::size_t i = 0; i < k; ++i) {
    const double beta = rho_[i] * dot(y_[i], q);
    for (std::size_t j = 0; j < n_; ++j) q[j] += (alpha[i] - beta) * s_[i][j];
  }
  for (double& v : q) v = -v;
  return q;
}

namespace {

double cubic_interpolate(double x1, double f1, double g1, double x2, double f2, double g2, double lo, double hi) {
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2sq = d1 * d1 - g1 * g2;
  if (d2sq >= 0.0) {
    const double d2 = std::sqrt(d2sq);
    double pos;
    if (x1 <= x2) {
      pos = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
    } else {
      pos = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
    }
    if (!std::isfinite(pos)) return 0.5 * (lo + hi);
    return std::min(std::max(pos, lo), hi);
  }
  return 0.5 * (lo + hi);
}

struct Trial {
  double t = 0.0;
  double f = 0.0;
  double gtd = 0.0;
  std::vector<double> g;
};

struct LineSearchResult {
  Trial best;
  int evals = 0;
};

// Strong Wolfe bracketing followed by zoom with safeguarded cubic steps.
LineSearchResult strong_wolfe(const LossGrad& fun, std::span<const double> x, double t, std::span<const double> d,
                              double f0, std::span<const double> g0, double gtd0, const LbfgsConfig& cfg) {
  const std::size_t n = x.size();
  std::vector<double> xt(n);
  LineSearchResult res;
  auto eval = [&](double step) {
    Trial tr;
    tr.t = step;
    tr.g.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + step * d[i];
    tr.f = fun(xt, tr.g);
    tr.gtd = dot(tr.g, d);
    ++res.evals;
    return tr;
  };
  const double d_norm = max_abs(d);

  Trial prev{0.0, f0, gtd0, std::vector<double>(g0.begin(), g0.end())};
  Trial cur = eval(t);
  std::vector<Trial> bracket;
  bool done = false;
  int ls_iter = 0;
  while (ls_iter < cfg.max_ls) {
    if (!std::isfinite(cur.f)) {
      bracket = {prev, cur};
      break;
    }
    if (cur.f > f0 + cfg.c1 * cur.t * gtd0 || (ls_iter > 1 && cur.f >= prev.f)) {
      bracket = {prev, cur};
      break;
    }
    if (std::abs(cur.gtd) <= -cfg.c2 * gtd0) {
      bracket = {cur};
      done = true;
      break;
    }
    if (cur.gtd >= 0.0) {
      bracket = {prev, cur};
      break;
    }
    const double min_step = cur.t + 0.01 * (cur.t - prev.t);
    const double max_step = cur.t * 10.0;
    const double next = cubic_interpolate(prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, min_step, max_step);
    prev = std::move(cur);
    cur = eval(next);
    ++ls_iter;
  }
  if (ls_iter == cfg.max_ls) bracket = {Trial{0.0, f0, gtd0, std::vector<double>(g0.begin(), g0.end())}, cur};

  bool insuf = false;
  auto order = [&](int& lo, int& hi) {
    if (bracket.size() == 1 || !std::isfinite(bracket[1].f) || bracket[0].f <= bracket[1].f) {
      lo = 0;
      hi = 1;
    } else {
      lo = 1;
      hi = 0;
    }
  };
  int lo = 0, hi = 1;
  order(lo, hi);
  while (!done && ls_iter < cfg.max_ls && bracket.size() == 2) {
    const double bmin = std::min(bracket[0].t, bracket[1].t);
    const double bmax = std::max(bracket[0].t, bracket[1].t);
    if ((bmax - bmin) * d_norm < cfg.tolerance_change) break;
    double step = std::isfinite(bracket[1].f) && std::isfinite(bracket[0].f)
                      ? cubic_interpolate(bracket[0].t, bracket[0].f, bracket[0].gtd, bracket[1].t, bracket[1].f,
                                          bracket[1].gtd, bmin, bmax)
                      : 0.5 * (bmin + bmax);
    const double eps = 0.1 * (bmax - bmin);
    if (std::min(bmax - step, step - bmin) < eps) {
      if (insuf || step >= bmax || step <= bmin) {
        step = std::abs(step - bmax) < std::abs(step - bmin) ? bmax - eps : bmin + eps;
        insuf = false;
      } else {
        insuf = true;
      }
    } else {
      insuf = false;
    }
    Trial tr = eval(step);
    ++ls_iter;
    if (!std::isfinite(tr.f) || tr.f > f0 + cfg.c1 * tr.t * gtd0 || tr.f >= bracket[lo].f) {
      bracket[hi] = std::move(tr);
      order(lo, hi);
    } else {
      if (std::abs(tr.gtd) <= -cfg.c2 * gtd0) {
        done = true;
      } else if (tr.gtd * (bracket[hi].t - bracket[lo].t) >= 0.0) {
        bracket[hi] = bracket[lo];
      }
      bracket[lo] = std::move(tr);
    }
  }
  res.best = std::move(bracket[bracket.size() == 1 ? 0 : lo]);
  return res;
}

}  // namespace

LbfgsIter Lbfgs::iterate(std::vector<double>& x, const LossGrad& f) {
  require_same(x.size(), n_, "Lbfgs::iterate");
  LbfgsIter out;
  if (!cached_ || x != x_cache_) {
    g_.assign(n_, 0.0);
    loss_ = f(x, g_);
    ++out.evals;
    if (!std::isfinite(loss_)) throw std::runtime_error("Lbfgs: non-finite loss at the current iterate");
    x_cache_ = x;
    cached_ = true;
  }
  out.loss = loss_;
  if (max_abs(g_) <= cfg_.tolerance_grad) {
    out.converged = true;
    return out;
  }
  std::vector<double> d = direction(g_);
  double gtd = dot(g_, d);
  if (!(gtd < -cfg_.tolerance_change)) {
    s_.clear();
    y_.clear();
    rho_.clear();
    d = direction(g_);
    gtd = dot(g_, d);
  }
  double t = cfg_.lr;
  if (iters_ == 0) {
    double l1 = 0.0;
    for (double v : g_) l1 += std::abs(v);
    t = std::min(1.0, 1.0 / l1) * cfg_.lr;
  }
  ++iters_;

  auto ls = strong_wolfe(f, x, t, d, loss_, g_, gtd, cfg_);
  out.evals += ls.evals;
  const double old_loss = loss_;
  std::vector<double> x_new(n_);
  std::vector<double> g_new;
  double f_new;
  if (!std::isfinite(ls.best.f) || ls.best.f > old_loss || ls.best.t == 0.0) {
    out.fallback = true;
    for (std::size_t i = 0; i < n_; ++i) {
      d[i] = -cfg_.fallback_lr * g_[i];
      x_new[i] = x[i] + d[i];
    }
    g_new.assign(n_, 0.0);
    f_new = f(x_new, g_new);
    ++out.evals;
    if (!std::isfinite(f_new)) throw std::runtime_error("Lbfgs: non-finite loss after fallback gradient step");
    t = 1.0;
  } else {
    t = ls.best.t;
    for (std::size_t i = 0; i < n_; ++i) x_new[i] = x[i] + t * d[i];
    g_new = std::move(ls.best.g);
    f_new = ls.best.f;
  }
  std::vector<double> s(n_), y(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    s[i] = x_new[i] - x[i];
    y[i] = g_new[i] - g_[i];
  }
  const double sy = dot(s, y);
  if (sy > cfg_.curvature_eps) {
    if (s_.size() == cfg_.history) {
      s_.pop_front();
      y_.pop_front();
      rho_.pop_front();
    }
    s_.push_back(std::move(s));
    y_.push_back(std::move(y));
    rho_.push_back(1.0 / sy);
  }
  x = std::move(x_new);
  x_cache_ = x;
  g_ = std::move(g_new);
  loss_ = f_new;
  out.loss = f_new;
  out.converged = max_abs(g_) <= cfg_.tolerance_grad || std::abs(f_new - old_loss) < cfg_.tolerance_change ||
                  max_abs(d) * std::abs(t) <= cfg_.tolerance_change;
  return out;
}

std::vector<LbfgsIter> Lbfgs::run(std::vector<double>& x, const LossGrad& f, int max_iter) {
  std::vector<LbfgsIter> log;
  for (int i = 0; i < max_iter; ++i) {
    log.push_back(iterate(x, f));
    if (log.back().converged) break;
  }
  return log;
}

// ----- preconditioned update rules -----

std::string to_string(const UpdateRule& r) {
  auto c = [](Space s) { return s == Space::U ? "U" : "W"; };
  return std::string("geometry=") + c(r.geometry) + ",gradient=" + c(r.gradient) + ",space=" + c(r.iterate);
}

void apply_update_rule(const UpdateRule& rule, std::span<double> params, std::span<const double> grad, double lr,
                   const model::GlobalCob& cob, std::span<const double> diag) {
  require_same(params.size(), grad.size(), "apply_update_rule");
  require_same(params.size(), cob.size(), "apply_update_rule");
  if (!diag.empty()) require_same(diag.size(), params.size(), "apply_update_rule diagonal");
  check_finite(grad, "apply_update_rule gradient");
  auto scale = [&](std::vector<double> v) {
    if (!diag.empty())
      for (std::size_t i = 0; i < v.size(); ++i) v[i] *= diag[i];
    return v;
  };
  const std::vector<double> g(grad.begin(), grad.end());
  std::vector<double> step;
  const bool gw = rule.geometry == Space::W;
  const bool dw = rule.gradient == Space::W;
  const bool iw = rule.iterate == Space::W;
  if (gw && dw) {
    step = iw ? scale(g) : cob.solve_transpose(scale(cob.solve(g)));
  } else if (gw && !dw) {
    step = iw ? scale(cob.apply(g)) : cob.solve_transpose(scale(g));
  } else if (!gw && !dw) {
    step = iw ? cob.apply_transpose(scale(cob.apply(g))) : scale(g);
  } else if (!gw && dw) {
    step = iw ? cob.apply_transpose(scale(g)) : scale(cob.solve(g));
  } else {
    throw std::invalid_argument("apply_update_rule: unsupported rule " + to_string(rule));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * step[i];
}

// ----- residual-based attention -----

void rba_update(RbaWeights& w, std::span<const double> residuals) {
  require_same(w.lambda.size(), residuals.size(), "rba_update");
  double emax = 0.0;
  for (double e : residuals) {
    if (!std::isfinite(e) || e < 0.0) throw std::invalid_argument("rba_update: residual magnitudes must be finite and >= 0");
    emax = std::max(emax, e);
  }
  if (emax == 0.0) return;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    w.lambda[i] = (1.0 - w.mu) * w.lambda[i] + w.mu * residuals[i] / emax;
  }
}

// ----- schedules -----

LrSchedule::Kind parse_schedule_kind(const std::string& s) {
  if (s == "constant") return LrSchedule::Kind::Constant;
  if (s == "linear_ramp" || s == "ramp") return LrSchedule::Kind::LinearRamp;
  if (s == "exp_cyclic" || s == "cyclic") return LrSchedule::Kind::ExpCyclic;
  throw std::invalid_argument("unknown learning-rate schedule '" + s + "' (constant|linear_ramp|exp_cyclic)");
}

std::string to_string(LrSchedule::Kind k) {
  switch (k) {
    case LrSchedule::Kind::Constant: return "constant";
    case LrSchedule::Kind::LinearRamp: return "linear_ramp";
    case LrSchedule::Kind::ExpCyclic: return "exp_cyclic";
  }
  return "constant";
}

double lr_at(const LrSchedule& s, long step) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  switch (s.kind) {
    case LrSchedule::Kind::Constant:
      return s.lr;
    case LrSchedule::Kind::LinearRamp:
      if (s.ramp_steps <= 0 || step >= s.ramp_steps) return s.lr;
      return s.lr0 + (s.lr - s.lr0) * static_cast<double>(step) / s.ramp_steps;
    case LrSchedule::Kind::ExpCyclic: {
      const long c = std::max(1, s.cycle);
      const double phase = static_cast<double>(step % c) / static_cast<double>(c);
      return s.lr * std::pow(s.gamma, static_cast<double>(step)) * (1.0 - 0.9 * phase);
    }
  }
  return s.lr;
}

}  // namespace mlkan::optim
