#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "mlkan/model.hpp"

using namespace mlkan;
using namespace mlkan::model;

namespace {

KanLayer random_layer(int P, int Q, int n, int r, std::mt19937_64& rng, BasisMode mode = BasisMode::Spline) {
  InputMap im;
  im.kind = NormKind::Affine;
  im.lo.assign(P, -1.0);
  im.hi.assign(P, 1.0);
  KanLayer L(P, Q, basis::make_uniform_knots(-1.0, 1.0, n, r), BasisMode::Spline, im);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& w : L.weights) w = nd(rng);
  if (mode == BasisMode::Relu) convert_layer(L, BasisMode::Relu);
  return L;
}

std::vector<double> random_point(int P, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x(P);
  for (auto& v : x) v = u(rng);
  return x;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("zero weights give zero output on every path") {
  std::mt19937_64 rng(1);
  auto L = random_layer(2, 3, 5, 3, rng);
  std::fill(L.weights.begin(), L.weights.end(), 0.0);
  const auto x = random_point(2, rng);
  for (double v : forward_spline(L, x)) CHECK(v == 0.0);
  for (double v : forward_coxdeboor(L, x)) CHECK(v == 0.0);
  CHECK(max_diff(to_relu_weights(L), std::vector<double>(L.weights.size(), 0.0)) == 0.0);
  convert_layer(L, BasisMode::Relu);
  for (double v : forward_relu(L, x)) CHECK(v == 0.0);
}

TEST_CASE("one-hot spline weights reproduce a single basis function") {
  std::mt19937_64 rng(2);
  for (int r = 1; r <= 4; ++r) {
    auto L = random_layer(1, 1, 6, r, rng);
    const int m = L.dim();
    for (int k = 0; k < m; ++k) {
      std::fill(L.weights.begin(), L.weights.end(), 0.0);
      L.weights[k] = 1.0;
      for (int s = 0; s < 25; ++s) {
        const double x = -1.0 + 2.0 * s / 24.0;
        const double want = basis::eval_bspline(L.knots, k + L.knots.first_index(), x);
        CHECK(std::abs(forward_spline(L, std::vector<double>{x})[0] - want) < 1e-12);
      }
    }
  }
}

TEST_CASE("spline fast path matches Cox-de Boor") {
  std::mt19937_64 rng(3);
  const auto L = random_layer(1, 1, 8, 3, rng);
  double err = 0.0;
  for (int s = 0; s < 100; ++s) {
    const auto x = random_point(1, rng);
    err = std::max(err, max_diff(forward_spline(L, x), forward_coxdeboor(L, x)));
  }
  CHECK(err < 1e-11);
  for (int r = 1; r <= 4; ++r) {
    const auto M = random_layer(3, 4, 7, r, rng);
    for (int s = 0; s < 50; ++s) {
      const auto x = random_point(3, rng);
      CHECK(max_diff(forward_spline(M, x), forward_coxdeboor(M, x)) < 1e-11);
    }
  }
}

TEST_CASE("r=1 ReLU weights are first differences of spline weights") {
  std::mt19937_64 rng(4);
  const auto L = random_layer(1, 2, 5, 1, rng);
  const auto W = to_relu_weights(L);
  const int m = L.dim();
  for (int q = 0; q < 2; ++q) {
    const std::size_t off = L.slice(q, 0);
    CHECK(W[off] == doctest::Approx(L.weights[off]));
    for (int j = 1; j < m; ++j) CHECK(W[off + j] == doctest::Approx(L.weights[off + j] - L.weights[off + j - 1]));
  }
}

TEST_CASE("r=2 single active knot gives a scaled hinge") {
  std::mt19937_64 rng(5);
  auto L = random_layer(1, 1, 4, 2, rng, BasisMode::Relu);
  std::fill(L.weights.begin(), L.weights.end(), 0.0);
  L.weights[2] = 3.0;
  const double t = L.knots[2 + L.knots.first_index()];
  for (double x : {-1.0, -0.3, 0.0, 0.2, 0.7, 1.0}) {
    CHECK(forward_relu(L, std::vector<double>{x})[0] == doctest::Approx(3.0 * std::max(x - t, 0.0)));
  }
}

TEST_CASE("weight conversion round trip and forward equivalence") {
  std::mt19937_64 rng(6);
  for (int r = 1; r <= 4; ++r) {
    for (int n : {2, 5, 16}) {
      auto L = random_layer(2, 3, n, r, rng);
      const auto u = L.weights;
      const auto w = to_relu_weights(L);
      KanLayer R = L;
      R.weights = w;
      R.mode = BasisMode::Relu;
      CHECK(max_diff(to_spline_weights(R), u) < 1e-10);
      for (int s = 0; s < 50; ++s) {
        const auto x = random_point(2, rng);
        CHECK(max_diff(forward_spline(L, x), forward_relu(R, x)) < 1e-10);
      }
      // the endpoints of the domain
      const std::vector<double> ends{1.0, -1.0};
      CHECK(max_diff(forward_spline(L, ends), forward_relu(R, ends)) < 1e-10);
    }
  }
}

TEST_CASE("network equivalence across basis modes") {
  for (int r = 1; r <= 4; ++r) {
    std::mt19937_64 rng(100 + r);
    KanSpec spec;
    spec.widths = {2, 5, 5, 1};
    spec.order = r;
    spec.intervals = 6;
    spec.init_scale = 0.5;
    auto net = make_kan(spec, rng);
    auto relu = net;
    convert_network(relu, BasisMode::Relu);
    std::vector<std::vector<double>> xs;
    for (int s = 0; s < 1000; ++s) xs.push_back(random_point(2, rng));
    const auto a = network_forward(net, xs);
    const auto b = network_forward(relu, xs);
    double err = 0.0;
    for (std::size_t s = 0; s < xs.size(); ++s) err = std::max(err, max_diff(a.value[s], b.value[s]));
    CHECK(err < 1e-10);
    CHECK(get_params(net) != get_params(relu));
  }
}

TEST_CASE("global change of basis is the per-layer contraction") {
  std::mt19937_64 rng(7);
  KanSpec spec;
  spec.widths = {2, 4, 3};
  spec.order = 3;
  spec.intervals = 5;
  auto net = make_kan(spec, rng);
  const auto u = get_params(net);
  const GlobalCob cob(net);
  CHECK(cob.size() == u.size());
  auto relu = net;
  convert_network(relu, BasisMode::Relu);
  CHECK(max_diff(cob.apply_transpose(u), get_params(relu)) < 1e-12);
  CHECK(max_diff(cob.solve_transpose(cob.apply_transpose(u)), u) < 1e-10);
  CHECK(max_diff(cob.solve(cob.apply(u)), u) < 1e-10);
}

TEST_CASE("parameter counts") {
  std::mt19937_64 rng(8);
  KanSpec s;
  s.widths = {2, 5, 1};
  s.order = 4;
  s.intervals = 4;
  CHECK(param_count(make_kan(s, rng)) == 105);

  KanSpec p;
  p.widths = {3, 5, 1};
  p.order = 4;
  p.augment = Augment::AbsX;
  const std::vector<int> ns{4, 8, 16, 32};
  const std::vector<std::size_t> want{140, 220, 380, 700};
  for (std::size_t i = 0; i < ns.size(); ++i) {
    p.intervals = ns[i];
    const auto net = make_kan(p, rng);
    CHECK(param_count(net) == want[i]);
    CHECK(net.raw_inputs() == 2);
  }

  MlpSpec m;
  m.widths = {2, 20, 20, 1};
  CHECK(param_count(make_mlp(m, rng)) == 501);
  m.widths = {2, 56, 56, 1};
  CHECK(param_count(make_mlp(m, rng)) == 3417);
}

TEST_CASE("vectorize round trip") {
  std::mt19937_64 rng(9);
  KanSpec s;
  s.widths = {2, 3, 2};
  auto net = make_kan(s, rng);
  auto p = get_params(net);
  for (auto& v : p) v += 1.0;
  set_params(net, p);
  CHECK(get_params(net) == p);
  CHECK_THROWS_AS(set_params(net, std::vector<double>(3)), std::invalid_argument);

  MlpSpec m;
  m.widths = {2, 4, 1};
  auto mlp = make_mlp(m, rng);
  auto q = get_params(mlp);
  q.back() = 0.25;
  set_params(mlp, q);
  CHECK(mlp.mlp.back().bias[0] == 0.25);
}

TEST_CASE("piecewise-linear KAN interpolates the identity") {
  std::mt19937_64 rng(10);
  KanSpec s;
  s.widths = {1, 1};
  s.order = 2;
  s.intervals = 8;
  auto net = make_kan(s, rng);
  auto& L = net.kan[0];
  for (int k = 0; k < L.dim(); ++k) L.weights[k] = L.knots[k + L.knots.first_index() + 1];
  std::vector<std::vector<double>> xs;
  for (int i = 0; i <= 8; ++i) xs.push_back({L.knots[i]});
  for (int i = 0; i < 20; ++i) xs.push_back(random_point(1, rng));
  const auto out = network_forward(net, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(out.value[i][0] == doctest::Approx(xs[i][0]).epsilon(1e-12));
}

TEST_CASE("zero network and width errors") {
  std::mt19937_64 rng(11);
  KanSpec s;
  s.widths = {2, 3, 1};
  auto net = make_kan(s, rng);
  set_params(net, std::vector<double>(param_count(net), 0.0));
  CHECK(network_forward(net, {{0.2, 0.3}}).value[0][0] == 0.0);
  CHECK_THROWS_AS(network_forward(net, {{0.2, 0.3, 0.4}}), std::invalid_argument);
  CHECK_THROWS_AS(network_forward(net, {{0.2, 0.3}}, std::vector<double>{1.0}), std::invalid_argument);

  KanSpec n;
  n.widths = {1, 1};
  n.input_norm = NormKind::None;
  auto raw = make_kan(n, rng);
  CHECK_NOTHROW(network_forward(raw, {{0.5}}));
  CHECK_THROWS_AS(network_forward(raw, {{1.5}}), std::domain_error);
}

TEST_CASE("affine normalizer clamps outside its range") {
  std::mt19937_64 rng(12);
  KanSpec s;
  s.widths = {1, 1};
  s.input_lo = {0.0};
  s.input_hi = {2.0};
  const auto net = make_kan(s, rng);
  const auto a = network_forward(net, {{-3.0}, {0.0}, {5.0}, {2.0}}, std::vector<double>{1.0});
  CHECK(a.value[0][0] == doctest::Approx(a.value[1][0]));
  CHECK(a.value[2][0] == doctest::Approx(a.value[3][0]));
  CHECK(a.d1[0][0] == 0.0);
  CHECK(a.d1[2][0] == 0.0);
}

TEST_CASE("jets match finite differences of the plain forward") {
  std::mt19937_64 rng(13);
  for (auto mode : {BasisMode::Spline, BasisMode::Relu}) {
    KanSpec s;
    s.widths = {2, 5, 1};
    s.order = 4;
    s.intervals = 5;
    s.init_scale = 0.4;
    s.hidden_norm = NormKind::Sigmoid;
    s.mode = mode;
    const auto net = make_kan(s, rng);
    for (int trial = 0; trial < 10; ++trial) {
      const auto x = random_point(2, rng, -0.9, 0.9);
      const std::vector<double> seed{0.6, 0.8};
      const double h = 1e-4;
      std::vector<std::vector<double>> pts;
      for (int k = -2; k <= 2; ++k) pts.push_back({x[0] + k * h * seed[0], x[1] + k * h * seed[1]});
      const auto f = network_forward(net, pts);
      const auto j = network_forward(net, {x}, seed);
      auto v = [&](int k) { return f.value[k + 2][0]; };
      const double fd1 = (-v(2) + 8 * v(1) - 8 * v(-1) + v(-2)) / (12 * h);
      const double fd2 = (-v(2) + 16 * v(1) - 30 * v(0) + 16 * v(-1) - v(-2)) / (12 * h * h);
      CHECK(std::abs(j.value[0][0] - v(0)) < 1e-14);
      CHECK(std::abs(fd1 - j.d1[0][0]) / (1.0 + std::abs(j.d1[0][0])) < 1e-7);
      CHECK(std::abs(fd2 - j.d2[0][0]) / (1.0 + std::abs(j.d2[0][0])) < 1e-4);
    }
  }
}

TEST_CASE("automatic gradient of a network matches finite differences") {
  std::mt19937_64 rng(14);
  KanSpec s;
  s.widths = {2, 4, 3, 1};
  s.order = 3;
  s.intervals = 4;
  s.init_scale = 0.5;
  s.hidden_norm = NormKind::Sigmoid;
  const auto net = make_kan(s, rng);
  const auto p = get_params(net);
  const std::vector<double> x{0.21, -0.37};
  ad::Tape t;
  std::vector<ad::Var> pv, xv;
  for (double v : p) pv.push_back(ad::make_param(t, v));
  for (double v : x) xv.push_back(ad::make_const(t, v));
  const auto out = network_eval<ad::Var, ad::Var>(net, std::span<const ad::Var>(xv), std::span<const ad::Var>(pv));
  const auto g = t.backward(out[0].index);
  const double h = 1e-5;
  double err = 0.0, gmax = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto pp = p, pm = p;
    pp[i] += h;
    pm[i] -= h;
    const double fd = (network_eval<double, double>(net, x, std::span<const double>(pp))[0] -
                       network_eval<double, double>(net, x, std::span<const double>(pm))[0]) /
                      (2 * h);
    err = std::max(err, std::abs(fd - g[i]));
    gmax = std::max(gmax, std::abs(g[i]));
  }
  CHECK(err / (1.0 + gmax) < 1e-5);
}

TEST_CASE("benchmark layer passes agree") {
  std::mt19937_64 rng(15);
  for (int r = 1; r <= 4; ++r) {
    const auto L = random_layer(3, 4, 6, r, rng);
    const int batch = 7;
    std::vector<double> xb;
    for (int b = 0; b < batch; ++b)
      for (double v : random_point(3, rng)) xb.push_back(v);
    LayerPassBuffers fast, slow;
    layer_pass(L, xb, batch, true, fast);
    layer_pass(L, xb, batch, false, slow);
    CHECK(max_diff(fast.out, slow.out) < 1e-11);
    CHECK(max_diff(fast.grad_w, slow.grad_w) < 1e-10);
    CHECK(max_diff(fast.grad_x, slow.grad_x) < 1e-9);
    // output sum is linear in the weights: grad_w is the summed basis values
    auto M = L;
    const std::size_t k = 5;
    M.weights[k] += 1.0;
    LayerPassBuffers bumped;
    layer_pass(M, xb, batch, true, bumped);
    double d = 0.0;
    for (std::size_t i = 0; i < fast.out.size(); ++i) d += bumped.out[i] - fast.out[i];
    CHECK(d == doctest::Approx(fast.grad_w[k]).epsilon(1e-10));
  }
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(16);
  KanSpec s;
  s.widths = {3, 5, 1};
  s.augment = Augment::AbsX;
  s.intervals = 8;
  s.mode = BasisMode::Relu;
  const auto net = make_kan(s, rng);
  std::stringstream ss;
  save_weights(net, ss);
  KanSpec s2 = s;
  s2.mode = BasisMode::Spline;
  std::mt19937_64 rng2(99);
  auto back = make_kan(s2, rng2);
  load_weights(back, ss);
  CHECK(back.kan[0].mode == BasisMode::Relu);
  CHECK(get_params(back) == get_params(net));

  MlpSpec m;
  m.widths = {2, 6, 1};
  const auto mlp = make_mlp(m, rng);
  std::stringstream ms;
  save_weights(mlp, ms);
  auto mlp2 = make_mlp(m, rng2);
  load_weights(mlp2, ms);
  CHECK(get_params(mlp2) == get_params(mlp));

  std::stringstream bad;
  save_weights(mlp, bad);
  KanSpec other;
  other.widths = {2, 6, 1};
  auto kan = make_kan(other, rng);
  CHECK_THROWS_AS(load_weights(kan, bad), std::runtime_error);
  std::stringstream junk("not a checkpoint\n");
  CHECK_THROWS_AS(load_weights(kan, junk), std::runtime_error);
}
