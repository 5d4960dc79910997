#include "mlkan/multilevel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mlkan::multilevel {

std::string to_string(ProlongKind k) { return k == ProlongKind::Dyadic ? "dyadic" : "general"; }

ProlongKind parse_prolong_kind(const std::string& s) {
  if (s == "dyadic") return ProlongKind::Dyadic;
  if (s == "general") return ProlongKind::General;
  throw std::invalid_argument("unknown prolongation '" + s + "' (dyadic|general)");
}

std::vector<double> Prolongation::apply(std::span<const double> u) const {
  if (u.size() != P.cols()) throw std::invalid_argument("Prolongation::apply: coefficient count mismatch");
  return linalg::matvec(P, u);
}

basis::KnotVector dyadic_refine(const basis::KnotVector& k) {
  const int r = k.order(), n = k.intervals();
  if (k.is_uniform()) return basis::make_uniform_knots(k.lower(), k.upper(), 2 * n, r);
  std::vector<double> t;
  const double hl = 0.5 * (k[1] - k[0]);
  const double hr = 0.5 * (k[n] - k[n - 1]);
  for (int j = 1 - r; j < 0; ++j) t.push_back(k.lower() + j * hl);
  for (int i = 0; i < n; ++i) {
    t.push_back(k[i]);
    t.push_back(0.5 * (k[i] + k[i + 1]));
  }
  t.push_back(k.upper());
  for (int j = 1; j <= r - 1; ++j) t.push_back(k.upper() + j * hr);
  return basis::KnotVector(r, std::move(t));
}

namespace {

double binom(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

}  // namespace

Prolongation dyadic_prolongation(const basis::KnotVector& coarse, double constant) {
  if (!coarse.is_uniform()) throw std::invalid_argument("dyadic_prolongation: nonuniform knots (use general_prolongation)");
  const int r = coarse.order(), n = coarse.intervals();
  Prolongation p{coarse, dyadic_refine(coarse), {}, ProlongKind::Dyadic, constant};
  const int mc = coarse.dim(), mf = p.fine.dim();
  p.P = linalg::DenseMatrix(static_cast<std::size_t>(mf), static_cast<std::size_t>(mc));
  for (int i = 1 - r; i <= n - 1; ++i) {
    for (int s = 0; s <= r; ++s) {
      const int j = 2 * i + s;
      if (j < 1 - r || j > 2 * n - 1) continue;  // vanishes on [a, b]
      p.P(static_cast<std::size_t>(j - (1 - r)), static_cast<std::size_t>(i - (1 - r))) = constant * binom(r, s);
    }
  }
  return p;
}

double dyadic_mask_constant(int r) {
  if (r < 1 || r > 8) throw std::invalid_argument("dyadic_mask_constant: order out of range");
  static double cache[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  if (cache[r] != 0.0) return cache[r];
  const auto probe = basis::make_uniform_knots(0.0, 1.0, 4, r);
  for (double c : {std::ldexp(1.0, 1 - r), std::ldexp(1.0, -r)}) {
    if (nesting_error(dyadic_prolongation(probe, c), 200, 7) < 1e-10) {
      cache[r] = c;
      return c;
    }
  }
  throw std::runtime_error("dyadic_mask_constant: no candidate constant satisfies the nesting identity for r = " +
                           std::to_string(r));
}

Prolongation dyadic_prolongation(const basis::KnotVector& coarse) {
  return dyadic_prolongation(coarse, dyadic_mask_constant(coarse.order()));
}

Prolongation general_prolongation(const basis::KnotVector& coarse, const basis::KnotVector& fine) {
  const int r = coarse.order();
  if (fine.order() != r) throw std::invalid_argument("general_prolongation: order mismatch");
  const double a = coarse.lower(), b = coarse.upper();
  const double hmin = [&] {
    double h = b - a;
    for (int i = 0; i < fine.intervals(); ++i) h = std::min(h, fine[i + 1] - fine[i]);
    return h;
  }();
  const double tol = 1e-12 * hmin;
  if (std::abs(fine.lower() - a) > tol || std::abs(fine.upper() - b) > tol) {
    throw std::invalid_argument("general_prolongation: domains differ");
  }
  const int mc = coarse.dim(), mf = fine.dim();
  const int fb = fine.first_index();
  auto find_fine = [&](double t) -> int {
    for (int j = fb; j <= fine.intervals() - 1; ++j)
      if (std::abs(fine[j] - t) <= tol) return j;
    return fb - 1;
  };

  // S: coarse truncated powers in terms of fine ones, valid on [a, b].
  linalg::DenseMatrix S(static_cast<std::size_t>(mc), static_cast<std::size_t>(mf));
  const int p = r - 1;
  for (int i = coarse.first_index(); i <= coarse.intervals() - 1; ++i) {
    const double t = coarse[i];
    const std::size_t row = static_cast<std::size_t>(i - coarse.first_index());
    const int j = find_fine(t);
    if (j >= fb) {
      S(row, static_cast<std::size_t>(j - fb)) = 1.0;
      continue;
    }
    if (t > a + tol) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "general_prolongation: coarse knot " << t << " is missing from the fine set";
      throw std::invalid_argument(msg.str());
    }
    // On [a, b]: (y + d)^p = sum_j c_j (y + d_j)^p with y = x - a, d = a - t,
    // d_j = a - t'_j over the r fine knots t'_{1-r} .. t'_0.
    const double h = fine[1] - fine[0];
    linalg::DenseMatrix V(static_cast<std::size_t>(r), static_cast<std::size_t>(r));
    std::vector<double> rhs(static_cast<std::size_t>(r));
    for (int k = 0; k <= p; ++k) {
      const int e = p - k;
      rhs[k] = std::pow((a - t) / h, e);
      for (int jj = 0; jj < r; ++jj) V(k, jj) = std::pow((a - fine[fb + jj]) / h, e);
    }
    const auto c = linalg::solve_dense(V, rhs);
    for (int jj = 0; jj < r; ++jj) S(row, static_cast<std::size_t>(jj)) = c[jj];
  }

  const auto Ac = basis::build_cob(coarse).matrix;
  const auto Af = basis::build_cob(fine).matrix;
  Prolongation out{coarse, fine, linalg::DenseMatrix(static_cast<std::size_t>(mf), static_cast<std::size_t>(mc)),
                   ProlongKind::General, std::numeric_limits<double>::quiet_NaN()};
  std::vector<double> v(static_cast<std::size_t>(mf));
  for (int i = 0; i < mc; ++i) {
    std::fill(v.begin(), v.end(), 0.0);
    for (int d = 0; d < static_cast<int>(Ac.bandwidth()) && i + d < mc; ++d) {
      const double aij = Ac.band(i, d);
      if (aij == 0.0) continue;
      const auto srow = S.row(static_cast<std::size_t>(i + d));
      for (int j = 0; j < mf; ++j) v[j] += aij * srow[j];
    }
    const auto z = linalg::banded_upper_solve(Af, v, true);
    for (int j = 0; j < mf; ++j) out.P(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = z[j];
  }
  return out;
}

double nesting_error(const Prolongation& p, int samples, std::uint64_t seed) {
  const auto& c = p.coarse;
  const auto& f = p.fine;
  std::vector<double> xs;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(c.lower(), c.upper());
  for (int s = 0; s < samples; ++s) xs.push_back(u(rng));
  for (int j = 0; j <= f.intervals(); ++j) xs.push_back(f[j]);
  double err = 0.0;
  std::vector<double> bf(static_cast<std::size_t>(f.dim()));
  for (double x : xs) {
    for (int j = 0; j < f.dim(); ++j) bf[j] = basis::eval_bspline(f, j + f.first_index(), x);
    for (int i = 0; i < c.dim(); ++i) {
      double s = 0.0;
      for (int j = 0; j < f.dim(); ++j) s += p.P(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) * bf[j];
      err = std::max(err, std::abs(basis::eval_bspline(c, i + c.first_index(), x) - s));
    }
  }
  return err;
}

RefineResult refine_network(const model::Network& net, ProlongKind kind) {
  if (net.kind != model::NetKind::Kan) throw std::invalid_argument("refine_network: only KAN networks can be refined");
  RefineResult out;
  out.net = net;
  out.net.kan.clear();
  for (const auto& L : net.kan) {
    const std::vector<double> u =
        L.mode == model::BasisMode::Spline ? L.weights : model::to_spline_weights(L);
    Prolongation p = kind == ProlongKind::Dyadic ? dyadic_prolongation(L.knots)
                                                 : general_prolongation(L.knots, dyadic_refine(L.knots));
    model::KanLayer F(L.in_width, L.out_width, p.fine, model::BasisMode::Spline, L.map);
    const std::size_t mc = static_cast<std::size_t>(L.dim());
    for (int q = 0; q < L.out_width; ++q) {
      for (int pi = 0; pi < L.in_width; ++pi) {
        const auto uf = p.apply(std::span<const double>(u).subspan(L.slice(q, pi), mc));
        std::copy(uf.begin(), uf.end(), F.weights.begin() + static_cast<std::ptrdiff_t>(F.slice(q, pi)));
      }
    }
    if (L.mode == model::BasisMode::Relu) model::convert_layer(F, model::BasisMode::Relu);
    out.net.kan.push_back(std::move(F));
    out.prolongations.push_back(std::move(p));
  }
  return out;
}

// ----- nested training -----

OptimizerSpec::Kind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerSpec::Kind::Sgd;
  if (s == "adam") return OptimizerSpec::Kind::Adam;
  if (s == "lbfgs") return OptimizerSpec::Kind::Lbfgs;
  throw std::invalid_argument("unknown optimizer '" + s + "' (sgd|adam|lbfgs)");
}

std::string to_string(OptimizerSpec::Kind k) {
  switch (k) {
    case OptimizerSpec::Kind::Sgd: return "sgd";
    case OptimizerSpec::Kind::Adam: return "adam";
    case OptimizerSpec::Kind::Lbfgs: return "lbfgs";
  }
  return "adam";
}

std::vector<int> parse_schedule(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw std::invalid_argument("schedule '" + s + "': empty entry");
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("schedule '" + s + "': '" + item + "' is not an integer");
    }
    if (used != item.size()) throw std::invalid_argument("schedule '" + s + "': '" + item + "' is not an integer");
    if (v < 0) throw std::invalid_argument("schedule '" + s + "': negative epoch count");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("schedule is empty");
  return out;
}

double schedule_work(const model::Network& coarse, const std::vector<int>& schedule) {
  double w = 0.0;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    double per = 0.0;
    for (const auto& L : coarse.kan) {
      const double n = static_cast<double>(L.knots.intervals()) * std::ldexp(1.0, static_cast<int>(k));
      per += static_cast<double>(L.in_width) * L.out_width * (n + L.knots.order());
    }
    w += schedule[k] * per;
  }
  return w;
}

namespace {

bool finite_parts(const LossParts& l) { return std::isfinite(l.total); }

}  // namespace

TrainResult nested_train(model::Network coarse, Objective& obj, const TrainOptions& opt) {
  if (opt.schedule.empty()) throw std::invalid_argument("nested_train: empty schedule");
  for (int e : opt.schedule)
    if (e < 0) throw std::invalid_argument("nested_train: negative epoch count");
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto wall = [&] {
    if (!opt.wallclock) return std::numeric_limits<double>::quiet_NaN();
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };

  TrainResult res;
  model::Network net = std::move(coarse);
  long step = 0;
  const auto& os = opt.optimizer;

  auto fail = [&](const std::string& msg) {
    res.diverged = true;
    res.error = msg;
    res.net = net;
  };

  for (std::size_t k = 0; k < opt.schedule.size(); ++k) {
    if (k > 0) {
      Transition tr;
      tr.from_level = static_cast<int>(k) - 1;
      tr.step = step;
      tr.before = obj.evaluate(net, {}).total;
      net = refine_network(net, opt.prolong).net;
      tr.after = obj.evaluate(net, {}).total;
      tr.rel_jump = std::abs(tr.after - tr.before) / std::max(std::abs(tr.before), 1e-300);
      res.transitions.push_back(tr);
    }
    const std::size_t n = model::param_count(net);
    res.params_per_level.push_back(n);
    optim::Adam adam(n, os.adam);
    optim::Lbfgs lbfgs(n, os.lbfgs);
    std::vector<double> grad(n), params;
    const int epochs = opt.schedule[k];
    for (int e = 0; e < epochs; ++e) {
      ++step;
      StepRecord rec;
      rec.step = step;
      rec.level = static_cast<int>(k);
      const long sched_step = os.schedule.kind == optim::LrSchedule::Kind::LinearRamp ? e : step - 1;
      try {
        if (os.kind == OptimizerSpec::Kind::Lbfgs) {
          rec.lr = os.lbfgs.lr;
          params = model::get_params(net);
          int evals = 0;
          const optim::LossGrad f = [&](std::span<const double> x, std::span<double> g) {
            model::set_params(net, x);
            std::fill(g.begin(), g.end(), 0.0);
            ++evals;
            return obj.evaluate(net, g).total;
          };
          lbfgs.run(params, f, os.lbfgs_iters);
          model::set_params(net, params);
          rec.loss = obj.evaluate(net, {});
          rec.evals = evals;
        } else {
          rec.lr = optim::lr_at(os.schedule, sched_step);
          if (os.level_warmup > 0 && e < os.level_warmup && os.schedule.lr > 0.0) {
            const double f0 = os.schedule.lr0 / os.schedule.lr;
            rec.lr *= f0 + (1.0 - f0) * static_cast<double>(e) / os.level_warmup;
          }
          std::fill(grad.begin(), grad.end(), 0.0);
          rec.loss = obj.evaluate(net, grad);
          rec.evals = 1;
          if (finite_parts(rec.loss)) {
            params = model::get_params(net);
            if (os.kind == OptimizerSpec::Kind::Adam) adam.step(params, grad, rec.lr);
            else optim::sgd_step(params, grad, rec.lr);
            model::set_params(net, params);
          }
        }
      } catch (const std::runtime_error& ex) {
        res.log.push_back(rec);
        fail(std::string("optimizer failure at step ") + std::to_string(step) + ": " + ex.what());
        return res;
      }
      res.evaluations += rec.evals;
      if (!finite_parts(rec.loss)) {
        res.log.push_back(rec);
        fail("non-finite loss at step " + std::to_string(step));
        return res;
      }
      obj.after_step(net);
      const bool last = e + 1 == epochs;
      if (opt.metric_every > 0 && (step % opt.metric_every == 0 || last)) rec.metric = obj.metric(net);
      rec.wall_ms = wall();
      res.log.push_back(rec);
      if (opt.on_step) opt.on_step(rec);
    }
    if (opt.on_level_end) opt.on_level_end(static_cast<int>(k), net);
  }
  res.final_loss = obj.evaluate(net, {});
  res.final_metric = obj.metric(net);
  res.net = std::move(net);
  if (!finite_parts(res.final_loss)) {
    res.diverged = true;
    res.error = "non-finite final loss";
  }
  return res;
}

}  // namespace mlkan::multilevel
