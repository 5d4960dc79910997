#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "mlkan/engine.hpp"

using namespace mlkan;
using namespace mlkan::model;

namespace {

struct Reference {
  std::vector<double> out;   // Q x J, engine layout
  std::vector<double> grad;  // d (c . out) / d params
};

// Jet<Var> evaluation on a tape: one forward_jet per direction, all sharing
// the same parameter nodes.
Reference tape_reference(const Network& net, const std::vector<double>& x, const std::vector<JetDirection>& dirs,
                         const std::vector<double>& c) {
  const auto p = get_params(net);
  ad::Tape t;
  std::vector<ad::Var> pv, xv;
  for (double v : p) pv.push_back(ad::make_param(t, v));
  for (double v : x) xv.push_back(ad::make_const(t, v));
  const int Q = net.outputs();
  const int J = 1 + 2 * static_cast<int>(dirs.size());
  std::vector<ad::Var> slots(static_cast<std::size_t>(Q * J));
  if (dirs.empty()) {
    const auto y = network_eval<ad::Var, ad::Var>(net, std::span<const ad::Var>(xv), std::span<const ad::Var>(pv));
    for (int q = 0; q < Q; ++q) slots[q * J] = y[q];
  }
  for (std::size_t e = 0; e < dirs.size(); ++e) {
    auto f = [&](std::span<const ad::Jet<ad::Var>> in) {
      return network_eval<ad::Jet<ad::Var>, ad::Var>(net, in, std::span<const ad::Var>(pv));
    };
    const auto y = ad::forward_jet<ad::Var>(f, std::span<const ad::Var>(xv), std::span<const double>(dirs[e].seed));
    for (int q = 0; q < Q; ++q) {
      slots[q * J] = y[q].v;
      slots[q * J + 1 + 2 * e] = y[q].d1;
      slots[q * J + 2 + 2 * e] = dirs[e].second ? y[q].d2 : ad::make_const(t, 0.0);
    }
  }
  Reference ref;
  ad::Var loss = ad::make_const(t, 0.0);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    ref.out.push_back(slots[i].value());
    loss = loss + slots[i] * c[i];
  }
  ref.grad = t.backward(loss.index);
  return ref;
}

void compare(const Network& net, const std::vector<JetDirection>& dirs, std::mt19937_64& rng, int samples = 8) {
  Engine eng(net, dirs);
  const int J = eng.width();
  const int Q = net.outputs();
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ux(-0.95, 0.95);
  for (int s = 0; s < samples; ++s) {
    std::vector<double> x(static_cast<std::size_t>(net.raw_inputs()));
    for (auto& v : x) v = ux(rng);
    std::vector<double> c(static_cast<std::size_t>(Q * J));
    for (auto& v : c) v = nd(rng);
    const auto ref = tape_reference(net, x, dirs, c);
    eng.forward(x);
    const auto out = eng.output();
    REQUIRE(out.size() == ref.out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (i % J != 0 && (i % J) % 2 == 0 && !dirs[((i % J) - 1) / 2].second) continue;
      CHECK(out[i] == doctest::Approx(ref.out[i]).epsilon(1e-10).scale(1.0));
    }
    std::vector<double> grad(param_count(net), 0.0);
    eng.backward(c, grad);
    double err = 0.0, gmax = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      err = std::max(err, std::abs(grad[i] - ref.grad[i]));
      gmax = std::max(gmax, std::abs(ref.grad[i]));
    }
    CHECK(err / (1.0 + gmax) < 1e-10);
  }
}

std::vector<JetDirection> xy_dirs() { return {{{1.0, 0.0}, true}, {{0.0, 1.0}, true}}; }

}  // namespace

TEST_CASE("engine matches the tape for KAN networks") {
  std::mt19937_64 rng(21);
  for (int r = 1; r <= 4; ++r) {
    for (auto mode : {BasisMode::Spline, BasisMode::Relu}) {
      for (auto hidden : {NormKind::Affine, NormKind::Sigmoid}) {
        KanSpec s;
        s.widths = {2, 4, 3, 2};
        s.order = r;
        s.intervals = 5;
        s.init_scale = 0.5;
        s.mode = mode;
        s.hidden_norm = hidden;
        s.hidden_lo = -1.5;
        s.hidden_hi = 1.5;
        const auto net = make_kan(s, rng);
        compare(net, {}, rng);
        if (r >= 2) compare(net, xy_dirs(), rng);
      }
    }
  }
}

TEST_CASE("engine with level-set augmentation and mixed directions") {
  std::mt19937_64 rng(22);
  KanSpec s;
  s.widths = {3, 5, 1};
  s.order = 4;
  s.intervals = 8;
  s.augment = Augment::AbsX;
  s.init_scale = 0.5;
  const auto net = make_kan(s, rng);
  std::vector<JetDirection> dirs{{{1.0, 0.0}, true}, {{0.0, 1.0}, false}, {{0.6, -0.8}, true}};
  compare(net, dirs, rng, 12);
}

TEST_CASE("engine matches the tape for MLP networks") {
  std::mt19937_64 rng(23);
  for (auto act : {Activation::Tanh, Activation::Relu}) {
    MlpSpec s;
    s.widths = {2, 6, 5, 1};
    s.act = act;
    auto net = make_mlp(s, rng);
    auto p = get_params(net);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto& v : p) v += nd(rng);  // nonzero biases
    set_params(net, p);
    compare(net, {}, rng);
    compare(net, xy_dirs(), rng);
  }
}

TEST_CASE("engine gradient accumulates and validates inputs") {
  std::mt19937_64 rng(24);
  KanSpec s;
  s.widths = {2, 3, 1};
  const auto net = make_kan(s, rng);
  Engine eng(net);
  eng.forward(std::vector<double>{0.1, 0.2});
  std::vector<double> g1(param_count(net), 0.0), g2(param_count(net), 0.0);
  const std::vector<double> adj{1.0};
  eng.backward(adj, g1);
  eng.backward(adj, g2);
  eng.backward(adj, g2);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]));
  CHECK_THROWS_AS(Engine(net, {{{1.0}, true}}), std::invalid_argument);
  std::vector<JetDirection> many(9, JetDirection{{1.0, 0.0}, true});
  CHECK_THROWS_AS(Engine(net, many), std::invalid_argument);
}
