// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.
//
//   mlkan_acceptance [--only 1,5,11] [--out DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mlkan/analysis.hpp"
#include "mlkan/basis.hpp"
#include "mlkan/engine.hpp"
#include "mlkan/experiment.hpp"
#include "mlkan/multilevel.hpp"
#include "mlkan/optim.hpp"
#include "mlkan/problems.hpp"

using namespace mlkan;
using experiment::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string out_root;

std::string subdir(const std::string& name) { return out_root.empty() ? std::string() : out_root + "/" + name; }

model::Network random_kan(std::vector<int> widths, int r, int n, std::uint64_t seed, double scale = 0.5) {
  model::KanSpec s;
  s.widths = std::move(widths);
  s.order = r;
  s.intervals = n;
  s.init_scale = scale;
  std::mt19937_64 rng(seed);
  return model::make_kan(s, rng);
}

std::vector<std::vector<double>> random_points(int count, int dim, std::uint64_t seed, double lo = -1.0,
                                               double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<std::vector<double>> x(static_cast<std::size_t>(count), std::vector<double>(dim));
  for (auto& p : x)
    for (auto& v : p) v = u(rng);
  return x;
}

double sup_diff(const model::Network& a, const model::Network& b, const std::vector<std::vector<double>>& x) {
  const auto ya = model::network_forward(a, x).value;
  const auto yb = model::network_forward(b, x).value;
  double e = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i)
    for (std::size_t q = 0; q < ya[i].size(); ++q) e = std::max(e, std::abs(ya[i][q] - yb[i][q]));
  return e;
}

// ----- 1 -----
Outcome basis_equivalence() {
  double worst = 0.0;
  int nets = 0;
  for (int r = 1; r <= 4; ++r) {
    for (int n : {4, 8, 16, 32}) {
      for (const auto& widths : {std::vector<int>{2, 5, 1}, std::vector<int>{2, 5, 5, 1}}) {
        // library default weight scale
        auto spline = random_kan(widths, r, n, 100 * r + n + widths.size(), model::KanSpec{}.init_scale);
        auto relu = spline;
        model::convert_network(relu, model::BasisMode::Relu);
        worst = std::max(worst, sup_diff(spline, relu, random_points(1000, 2, 7 * n + r)));
        ++nets;
      }
    }
  }
  return {worst < 1e-9, std::to_string(nets) + " networks, max sup-norm difference " + sci(worst)};
}

// ----- 2 -----
Outcome nesting() {
  double worst = 0.0;
  for (int r = 1; r <= 4; ++r) {
    for (auto mode : {model::BasisMode::Spline, model::BasisMode::Relu}) {
      auto net = random_kan({2, 5, 5, 1}, r, 4, 40 + r);
      if (mode == model::BasisMode::Relu) model::convert_network(net, mode);
      const auto x = random_points(500, 2, 90 + r);
      for (int level = 0; level < 3; ++level) {
        auto fine = multilevel::refine_network(net).net;
        worst = std::max(worst, sup_diff(net, fine, x));
        net = std::move(fine);
      }
    }
  }
  // loss continuity inside the driver, spline and ReLU regression
  double jump = 0.0;
  for (const char* basis : {"spline", "relu"}) {
    json cfg = experiment::default_config("regression");
    cfg["model"]["basis"] = basis;
    cfg["problem"]["samples"] = 500;
    cfg["train"]["schedule"] = {4, 4, 4, 4};
    cfg["optimizer"]["lbfgs_iters"] = 5;
    const auto res = experiment::run_experiment(cfg);
    for (const auto& t : res.train.transitions) jump = std::max(jump, t.rel_jump);
  }
  return {worst < 1e-9 && jump < 1e-6,
          "refinement discrepancy " + sci(worst) + ", max relative loss jump at transitions " + sci(jump)};
}

// ----- 3 -----
Outcome cob_structure() {
  double closed = 0.0;
  for (int r = 1; r <= 4; ++r) {
    for (int n : {4, 8, 16, 32}) {
      const auto k = basis::make_uniform_knots(0.0, 1.0, n, r);
      const auto a = basis::build_cob(k), c = basis::cob_closed_form(k);
      double amax = 0.0, d = 0.0;
      for (int i = 0; i < a.dim(); ++i)
        for (int j = i; j < a.dim(); ++j) {
          amax = std::max(amax, std::abs(c.matrix.at(i, j)));
          d = std::max(d, std::abs(a.matrix.at(i, j) - c.matrix.at(i, j)));
        }
      closed = std::max(closed, d / amax);
    }
  }
  double fd = 0.0;
  for (int r = 1; r <= 4; ++r)
    for (double h : {1.0, 0.25, 0.1}) fd = std::max(fd, analysis::fd_stencil_check(r, 16, h));
  // interior rows of (A^[1])^T A^[1]
  const auto k1 = basis::make_uniform_knots(0.0, 1.0, 12, 1);
  const auto a1 = basis::build_cob(k1).matrix.to_dense();
  const auto g = linalg::matmul(a1.transpose(), a1);
  double stencil = 0.0;
  for (std::size_t i = 1; i + 1 < g.rows(); ++i) {
    const double s = g(i, i) / 2.0;
    for (std::size_t j = 0; j < g.cols(); ++j) {
      const double want = j == i ? 2.0 * s : (j + 1 == i || j == i + 1 ? -s : 0.0);
      stencil = std::max(stencil, std::abs(g(i, j) - want) / std::abs(s));
    }
  }
  return {closed < 1e-12 && fd < 1e-12 && stencil < 1e-12,
          "closed form " + sci(closed) + ", fd stencils " + sci(fd) + ", (-1,2,-1) rows " + sci(stencil)};
}

// ----- 4 -----
Outcome eigenstructure() {
  bool ok = true;
  std::ostringstream os;
  for (int n : {8, 50}) {
    const auto rep = analysis::eigen_report(1, n);
    const int dim = static_cast<int>(rep.sign_changes.size());
    const bool good = rep.sign_changes.front() == 0 && rep.sign_changes.back() == dim - 1;
    ok = ok && good;
    os << "r=1 n=" << n << " sign changes " << rep.sign_changes.front() << "/" << rep.sign_changes.back() << "; ";
  }
  for (int r = 1; r <= 4; ++r) {
    const auto rep = analysis::eigen_report(r, 100);
    ok = ok && rep.spearman >= 0.99;
    os << "spearman(r=" << r << ") " << rep.spearman << "; ";
  }
  // the 2r +- 0.3 band is asserted where n <= 128 is already asymptotic
  for (int r = 1; r <= 4; ++r) {
    const double slope = analysis::ratio_scaling(r, {16, 32, 64, 128});
    const bool in_band = std::abs(slope - 2.0 * r) <= 0.3;
    if (r <= 2) ok = ok && in_band;
    os << "slope(r=" << r << ") " << slope << (r <= 2 ? "" : " [info]") << "; ";
  }
  const double ratio = analysis::eigen_report(1, 10).ratio;
  ok = ok && ratio > 100.0;
  os << "ratio(r=1,n=10) " << ratio;
  return {ok, os.str()};
}

// ----- 5 -----
Outcome bounds() {
  bool ok = true;
  double worst_margin = -1e300;
  for (int r = 1; r <= 5; ++r) {
    for (int n = 1; n <= 128; n = n < 8 ? n + 1 : n * 2) {
      const auto b = analysis::singular_bound_check(r, n);
      ok = ok && b.holds;
      worst_margin = std::max(worst_margin, b.sigma_max - b.bound);
    }
  }
  double worst_ratio = 0.0;
  for (int r = 1; r <= 4; ++r) {
    for (int k = 0; k < 5; ++k) {
      const auto net = random_kan({2, 5, 1}, r, 8, 500 + 10 * r + k);
      const auto nb = analysis::ntk_bound_check(net, random_points(32, 2, 600 + 10 * r + k));
      ok = ok && nb.holds;
      worst_ratio = std::max(worst_ratio, nb.ratio);
    }
  }
  return {ok, "max sigma_max - bound " + sci(worst_margin) + ", max rho_spline/rho_relu " + sci(worst_ratio) +
                  " over 20 nets"};
}

// ----- 6 -----
// Central differences on a geometric step sweep; the estimate is taken
// where two consecutive steps agree best, so neither truncation near kinks
// nor roundoff at tiny steps decides the result.
template <class F>
double plateau_derivative(F&& central) {
  double prev = central(1e-3), best = prev, gap = 1e300;
  for (double h = 2.5e-4; h > 1e-9; h /= 4.0) {
    const double d = central(h);
    if (std::abs(d - prev) < gap) {
      gap = std::abs(d - prev);
      best = d;
    }
    prev = d;
  }
  return best;
}

// Directional derivatives along random unit directions: g . v against
// central differences of the loss.
double fd_gradient_error(problems::Problem& p, model::Network net, std::uint64_t seed) {
  const auto theta = model::get_params(net);
  const std::size_t n = theta.size();
  std::vector<double> g(n, 0.0);
  p.evaluate(net, g);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 6; ++t) {
    std::vector<double> v(n);
    double norm = 0.0;
    for (auto& x : v) {
      x = nd(rng);
      norm += x * x;
    }
    double exact = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] /= std::sqrt(norm);
      exact += g[i] * v[i];
    }
    auto central = [&](double h) {
      auto tp = theta, tm = theta;
      for (std::size_t i = 0; i < n; ++i) {
        tp[i] += h * v[i];
        tm[i] -= h * v[i];
      }
      model::set_params(net, tp);
      const double fp = p.evaluate(net, {}).total;
      model::set_params(net, tm);
      const double fm = p.evaluate(net, {}).total;
      return (fp - fm) / (2 * h);
    };
    const double fd = plateau_derivative(central);
    worst = std::max(worst, std::abs(fd - exact) / std::max(std::abs(exact), 1e-300));
  }
  return worst;
}

Outcome autodiff_checks() {
  std::ostringstream os;
  double worst_grad = 0.0;
  struct Case {
    std::string name;
    json cfg;
  };
  std::vector<Case> cases;
  {
    json c = experiment::default_config("regression");
    c["problem"]["samples"] = 400;
    c["model"]["order"] = 2;
    cases.push_back({"regression", c});
  }
  {
    json c = experiment::default_config("poisson");
    c["problem"]["volume_side"] = 15;
    c["problem"]["boundary_points"] = 40;
    c["problem"]["interface_points"] = 15;
    cases.push_back({"poisson", c});
  }
  {
    json c = experiment::default_config("burgers");
    c["problem"]["nx"] = 12;
    c["problem"]["nt"] = 12;
    cases.push_back({"burgers", c});
  }
  {
    json c = experiment::default_config("allen-cahn");
    c["problem"]["collocation"] = 300;
    c["problem"]["ic_points"] = 41;
    cases.push_back({"allen-cahn", c});
  }
  for (auto base : std::vector<Case>(cases)) {
    base.cfg["model"]["kind"] = "mlp";
    base.cfg["model"]["widths"] = {2, 16, 16, 1};
    cases.push_back({base.name + "/mlp", base.cfg});
  }
  for (auto& c : cases) {
    for (const char* basis : {"spline", "relu"}) {
      if (c.cfg["model"]["kind"] == "mlp" && std::string(basis) == "relu") continue;
      c.cfg["model"]["basis"] = basis;
      c.cfg["model"]["init_scale"] = 0.3;
      auto p = experiment::make_problem(c.cfg);
      auto net = experiment::make_network(c.cfg, *p);
      const double e = fd_gradient_error(*p, net, 17);
      worst_grad = std::max(worst_grad, e);
    }
  }
  // jets: second derivative against central differences of the first,
  // at points kept away from every knot of the first layer
  double worst_jet = 0.0;
  for (int r = 3; r <= 4; ++r) {
    const auto net = random_kan({2, 5, 5, 1}, r, 4, 70 + r);
    const std::vector<double> seed{0.6, 0.8};
    const double h = 1e-5;
    int used = 0;
    for (const auto& x : random_points(200, 2, 80 + r, -0.95, 0.95)) {
      bool near = false;
      for (double v : x) {
        const double s = (v + 1.0) * 2.0;  // grid spacing 0.5
        near = near || std::abs(s - std::round(s)) < 0.02;
      }
      if (near) continue;
      const std::vector<std::vector<double>> pts{x, {x[0] + h * seed[0], x[1] + h * seed[1]},
                                                 {x[0] - h * seed[0], x[1] - h * seed[1]}};
      const auto o = model::network_forward(net, pts, seed);
      const double fd = (o.d1[1][0] - o.d1[2][0]) / (2 * h);
      worst_jet = std::max(worst_jet, std::abs(fd - o.d2[0][0]) / std::abs(o.d2[0][0]));
      if (++used == 40) break;
    }
  }
  os << cases.size() << " problem/architecture cases x bases, max gradient rel. error " << sci(worst_grad)
     << "; max jet second-derivative rel. error " << sci(worst_jet);
  return {worst_grad < 1e-5 && worst_jet < 1e-4, os.str()};
}

// ----- 7 -----
Outcome regression() {
  const std::vector<std::uint64_t> seeds{1234, 1235, 1236, 1237, 1238};
  std::map<std::string, double> mean;
  std::ostringstream os;
  const std::vector<std::pair<std::string, std::vector<int>>> runs{
      {"spline", {32, 16, 8, 4}}, {"spline", {128, 0, 0, 0}}, {"spline", {0, 0, 0, 16}},
      {"relu", {32, 16, 8, 4}},   {"relu", {128, 0, 0, 0}}};
  for (const auto& [basis, schedule] : runs) {
    json cfg = experiment::default_config("regression");
    cfg["model"]["basis"] = basis;
    cfg["train"]["schedule"] = schedule;
    cfg["problem"]["samples"] = 10000;
    experiment::RunOptions ro;
    std::string key = basis + "{" + std::to_string(schedule[0]) + "," + std::to_string(schedule[1]) + "," +
                      std::to_string(schedule[2]) + "," + std::to_string(schedule[3]) + "}";
    ro.out_dir = subdir("regression_" + basis + "_" + std::to_string(schedule[0]) + "_" + std::to_string(schedule[3]));
    ro.write_fields = false;
    const auto er = experiment::run_ensemble(cfg, seeds, ro);
    mean[key] = er.finals.size() == seeds.size() ? er.mean : std::nan("");
    os << key << " " << sci(mean[key]) << "+-" << sci(er.stdev) << "; ";
  }
  const double ml = mean["spline{32,16,8,4}"], co = mean["spline{128,0,0,0}"], fi = mean["spline{0,0,0,16}"];
  const double rml = mean["relu{32,16,8,4}"], rco = mean["relu{128,0,0,0}"];
  const bool ok = ml <= 1e-4 && co >= 10 * ml && fi >= 10 * ml && rml <= 2 * rco && rml >= rco / 2;
  os << "coarse/ml " << co / ml << ", fine/ml " << fi / ml << ", relu ml/coarse " << rml / rco;
  return {ok, os.str()};
}

// ----- 8 -----
Outcome burgers() {
  std::map<std::string, double> loss;
  std::ostringstream os;
  for (const auto& schedule : {std::vector<int>{800, 400, 200}, std::vector<int>{3200, 0, 0}}) {
    json cfg = experiment::default_config("burgers");
    cfg["train"]["schedule"] = schedule;
    experiment::RunOptions ro;
    ro.out_dir = subdir("burgers_" + std::to_string(schedule[0]));
    const auto res = experiment::run_experiment(cfg, ro);
    const double l = res.train.diverged ? std::nan("") : res.train.final_loss.total;
    loss[schedule[0] == 800 ? "ml" : "coarse"] = l;
    os << "[" << schedule[0] << "," << schedule[1] << "," << schedule[2] << "] " << sci(l)
       << " (work " << multilevel::schedule_work(experiment::make_network(cfg, *experiment::make_problem(cfg)), schedule)
       << "); ";
  }
  const double ratio = loss["coarse"] / loss["ml"];
  os << "coarse/ml " << ratio;
  return {ratio >= 50.0, os.str()};
}

// ----- 9 -----
Outcome allen_cahn() {
  std::ostringstream os;
  std::map<std::string, double> final_loss;
  std::vector<double> energy;
  for (const char* basis : {"spline", "relu"}) {
    json cfg = experiment::default_config("allen-cahn");
    cfg["model"]["basis"] = basis;
    cfg["train"]["schedule"] = {500, 500, 500, 500};
    experiment::RunOptions ro;
    ro.out_dir = subdir(std::string("allen_cahn_") + basis);
    const auto res = experiment::run_experiment(cfg, ro);
    final_loss[basis] = res.train.diverged ? std::nan("") : res.train.final_loss.total;
    os << basis << " loss " << sci(final_loss[basis]) << " energies";
    for (const auto& l : res.levels) os << " " << sci(l.spectral_energy);
    os << "; ";
    if (std::string(basis) == "spline")
      for (const auto& l : res.levels) energy.push_back(l.spectral_energy);
  }
  bool decreasing = energy.size() == 4;
  for (std::size_t i = 1; i < energy.size(); ++i) decreasing = decreasing && energy[i] < energy[i - 1];
  const double ratio = final_loss["relu"] / final_loss["spline"];
  os << "relu/spline " << ratio;
  return {decreasing && ratio >= 10.0, os.str()};
}

// ----- 10 -----
Outcome poisson() {
  std::ostringstream os;
  std::map<std::string, double> err;
  std::vector<std::size_t> params;
  for (const char* basis : {"spline", "relu"}) {
    json cfg = experiment::default_config("poisson");
    cfg["model"]["basis"] = basis;
    experiment::RunOptions ro;
    ro.out_dir = subdir(std::string("poisson_") + basis);
    const auto res = experiment::run_experiment(cfg, ro);
    err[basis] = res.train.diverged ? std::nan("") : res.train.final_metric;
    if (std::string(basis) == "spline") params = res.train.params_per_level;
    os << basis << " rel. l2 error " << sci(err[basis]) << "; ";
  }
  const bool counts = params == std::vector<std::size_t>{140, 220, 380, 700};
  os << "params";
  for (auto p : params) os << " " << p;
  return {err["spline"] < 0.1 && err["relu"] > 0.5 && counts, os.str()};
}

// ----- 11 -----
Outcome bench() {
  experiment::BenchOptions bo;
  bo.orders = {1, 2, 3, 4};
  bo.sizes = {16, 32, 64};
  bo.reps = 10;
  const auto rows = experiment::bench_forward(bo);
  if (!out_root.empty()) {
    std::filesystem::create_directories(out_root);
    experiment::write_bench_csv(out_root + "/bench.csv", rows);
  }
  bool ok = true;
  std::map<std::pair<int, int>, double> s;
  for (const auto& r : rows) {
    s[{r.n, r.r}] = r.speedup;
    if (r.r >= 3) ok = ok && r.speedup > 1.0;
  }
  std::ostringstream os;
  for (int n : {16, 32}) {
    os << "n=" << n << ":";
    for (int r = 1; r <= 4; ++r) {
      os << " " << s[{n, r}];
      if (r > 1) ok = ok && s[{n, r}] >= s[{n, r - 1}];
    }
    os << "; ";
  }
  os << "n=64:";
  for (int r = 1; r <= 4; ++r) os << " " << s[{64, r}];
  return {ok, os.str()};
}

// ----- 12 -----
Outcome update_rules() {
  using optim::Space;
  auto net = random_kan({2, 3, 1}, 3, 4, 12);
  const model::GlobalCob cob(net);
  const std::size_t n = cob.size();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  // toy loss in w: 0.5 sum s_i (w_i - c_i)^2 + 0.05 sum w_i^4
  std::vector<double> c(n), s(n), D(n);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = nd(rng);
    s[i] = 0.5 + std::abs(nd(rng));
    D[i] = 0.5 + std::abs(nd(rng));
  }
  auto grad_w = [&](const std::vector<double>& w) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = s[i] * (w[i] - c[i]) + 0.2 * w[i] * w[i] * w[i];
    return g;
  };
  std::vector<double> u0(n);
  for (auto& v : u0) v = 0.1 * nd(rng);
  double worst = 0.0;
  int rules = 0;
  for (auto geo : {Space::U, Space::W}) {
    for (auto grd : {Space::U, Space::W}) {
      for (bool precond : {false, true}) {
        std::vector<double> u = u0, w = cob.apply_transpose(u0);
        const std::vector<double> diag = precond ? D : std::vector<double>{};
        for (int k = 0; k < 20; ++k) {
          optim::apply_update_rule({geo, grd, Space::U}, u, cob.apply(grad_w(cob.apply_transpose(u))), 1e-3, cob, diag);
          optim::apply_update_rule({geo, grd, Space::W}, w, grad_w(w), 1e-3, cob, diag);
          const auto mapped = cob.apply_transpose(u);
          double scale = 0.0, e = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            e = std::max(e, std::abs(mapped[i] - w[i]));
            scale = std::max(scale, std::abs(w[i]));
          }
          worst = std::max(worst, e / std::max(1.0, scale));
        }
        ++rules;
      }
    }
  }
  return {worst < 1e-9, std::to_string(rules) + " rules x 20 steps, max trajectory difference " + sci(worst)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only;
  app.add_option("--only", only, "comma-separated criterion numbers (default: all)");
  app.add_option("--out", out_root, "directory for run artifacts (default: none)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"basis equivalence", basis_equivalence},
      {"nesting identity", nesting},
      {"change-of-basis structure", cob_structure},
      {"eigenstructure", eigenstructure},
      {"NTK and singular bounds", bounds},
      {"autodiff", autodiff_checks},
      {"regression", regression},
      {"Burgers", burgers},
      {"Allen-Cahn", allen_cahn},
      {"Poisson (extended)", poisson},
      {"forward-path benchmark", bench},
      {"update-table realizations", update_rules},
  };
  std::vector<int> pick;
  if (only.empty()) {
    for (int i = 1; i <= static_cast<int>(all.size()); ++i) pick.push_back(i);
  } else {
    pick = experiment::parse_int_list(only);
  }
  int failed = 0;
  for (int id : pick) {
    if (id < 1 || id > static_cast<int>(all.size())) {
      std::fprintf(stderr, "no criterion %d\n", id);
      return 2;
    }
    const auto& [name, fn] = all[id - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), sec, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
