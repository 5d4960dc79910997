#include "mlkan/engine.hpp"

#include <algorithm>
#include <cmath>

namespace mlkan::model {

namespace {

// Value and first three derivatives of max(z, 0)^p, right-continuous at 0.
inline void relu_pow_derivs(double z, int p, double* f) {
  f[0] = f[1] = f[2] = f[3] = 0.0;
  if (z < 0.0) return;
  // f[o] = p!/(p-o)! z^(p-o)
  for (int o = 0; o <= 3 && o <= p; ++o) {
    double c = 1.0;
    for (int i = 0; i < o; ++i) c *= (p - i);
    double zp = 1.0;
    for (int i = 0; i < p - o; ++i) zp *= z;
    f[o] = c * zp;
  }
}

// Jet chain for g(u): out = (g0, g1 u1, g2 u1^2 + g1 u2) per direction.
inline void chain_forward(const double* u, double g0, double g1, double g2, int dirs, double* out) {
  out[0] = g0;
  for (int e = 0; e < dirs; ++e) {
    const double u1 = u[1 + 2 * e], u2 = u[2 + 2 * e];
    out[1 + 2 * e] = g1 * u1;
    out[2 + 2 * e] = g2 * u1 * u1 + g1 * u2;
  }
}

// Reverse of chain_forward: accumulates the adjoint of u from the adjoint of
// the output, given g1..g3 at u0.
inline void chain_backward(const double* u, const double* obar, double g1, double g2, double g3, int dirs,
                           double* ubar) {
  double b0 = obar[0] * g1;
  for (int e = 0; e < dirs; ++e) {
    const double u1 = u[1 + 2 * e], u2 = u[2 + 2 * e];
    const double o1 = obar[1 + 2 * e], o2 = obar[2 + 2 * e];
    b0 += o1 * g2 * u1 + o2 * (g3 * u1 * u1 + g2 * u2);
    ubar[1 + 2 * e] += o1 * g1 + 2.0 * o2 * g2 * u1;
    ubar[2 + 2 * e] += o2 * g1;
  }
  ubar[0] += b0;
}

}  // namespace

Engine::Engine(const Network& net, std::vector<JetDirection> dirs)
    : net_(net), dirs_(std::move(dirs)), width_(1 + 2 * static_cast<int>(dirs_.size())) {
  const int R = net.raw_inputs();
  if (dirs_.size() > 8) throw std::invalid_argument("Engine: at most 8 seed directions");
  for (const auto& d : dirs_)
    if (static_cast<int>(d.seed.size()) != R) throw std::invalid_argument("Engine: seed length mismatch");
  const std::size_t J = static_cast<std::size_t>(width_);
  std::size_t off = 0;
  std::size_t maxw = 0;
  if (net.kind == NetKind::Kan) {
    for (const auto& L : net.kan) {
      offsets_.push_back(off);
      off += L.weights.size();
      KanState st;
      const std::size_t P = L.in_width, Q = L.out_width, m = L.dim();
      st.z.resize(P * J);
      st.nd.resize(P * 3);
      st.s.resize(P * J);
      st.k0.resize(P);
      st.cnt.resize(P);
      st.f.resize(P * m * 4);
      st.phi.resize(P * m * J);
      st.y.resize(Q * J);
      kan_.push_back(std::move(st));
      maxw = std::max({maxw, P, Q});
    }
  } else {
    for (const auto& L : net.mlp) {
      offsets_.push_back(off);
      off += L.weights.size() + L.bias.size();
      MlpState st;
      const std::size_t P = L.in_width, Q = L.out_width;
      st.z.resize(P * J);
      st.a.resize(Q * J);
      st.g.resize(Q * 3);
      st.y.resize(Q * J);
      mlp_.push_back(std::move(st));
      maxw = std::max({maxw, P, Q});
    }
  }
  in_.resize(static_cast<std::size_t>(net.widths().front()) * J);
  out_.resize(static_cast<std::size_t>(net.outputs()) * J);
  adj_a_.resize(maxw * J);
  adj_b_.resize(maxw * J);
}

void Engine::forward(std::span<const double> x) {
  const int R = net_.raw_inputs();
  if (static_cast<int>(x.size()) != R) throw std::invalid_argument("Engine::forward: input width mismatch");
  const int J = width_, D = directions();
  std::fill(in_.begin(), in_.end(), 0.0);
  for (int i = 0; i < R; ++i) {
    in_[static_cast<std::size_t>(i) * J] = x[i];
    for (int e = 0; e < D; ++e) in_[static_cast<std::size_t>(i) * J + 1 + 2 * e] = dirs_[e].seed[i];
  }
  if (net_.augment == Augment::AbsX) {
    const double sg = x[0] > 0.0 ? 1.0 : (x[0] < 0.0 ? -1.0 : 0.0);
    double* dst = in_.data() + static_cast<std::size_t>(R) * J;
    dst[0] = std::abs(x[0]);
    for (int c = 1; c < J; ++c) dst[c] = sg * in_[c];
  }
  if (net_.kind == NetKind::Kan) {
    std::span<const double> cur = in_;
    for (std::size_t l = 0; l < net_.kan.size(); ++l) {
      kan_forward(l, cur);
      cur = kan_[l].y;
    }
    std::copy(cur.begin(), cur.end(), out_.begin());
  } else {
    std::span<const double> cur = in_;
    for (std::size_t l = 0; l < net_.mlp.size(); ++l) {
      mlp_forward(l, cur);
      cur = mlp_[l].y;
    }
    std::copy(cur.begin(), cur.end(), out_.begin());
  }
  const int Q = net_.outputs();
  for (int e = 0; e < D; ++e) {
    if (dirs_[e].second) continue;
    for (int q = 0; q < Q; ++q) out_[static_cast<std::size_t>(q) * J + 2 + 2 * e] = 0.0;
  }
}

void Engine::kan_forward(std::size_t l, std::span<const double> in) {
  const KanLayer& L = net_.kan[l];
  KanState& st = kan_[l];
  const int J = width_, D = directions();
  const int P = L.in_width, Q = L.out_width, m = L.dim();
  const int r = L.knots.order(), n = L.knots.intervals(), base = L.knots.first_index();
  const double a = L.domain_lower(), b = L.domain_upper();
  const auto& A = L.cob.matrix;
  const bool spline = L.mode == BasisMode::Spline;
  std::copy(in.begin(), in.end(), st.z.begin());
  std::fill(st.y.begin(), st.y.end(), 0.0);
  double psi[4 * 64];
  for (int p = 0; p < P; ++p) {
    const double* z = st.z.data() + static_cast<std::size_t>(p) * J;
    double* s = st.s.data() + static_cast<std::size_t>(p) * J;
    double* nd = st.nd.data() + static_cast<std::size_t>(p) * 3;
    double s0, n1 = 0.0, n2 = 0.0, n3 = 0.0;
    switch (L.map.kind) {
      case NormKind::Affine: {
        const double lo = L.map.lo[p], hi = L.map.hi[p];
        if (z[0] < lo) {
          s0 = a;
        } else if (z[0] > hi) {
          s0 = b;
        } else {
          const double c = (b - a) / (hi - lo);
          s0 = z[0] * c + (a - c * lo);
          n1 = c;
        }
        break;
      }
      case NormKind::Sigmoid: {
        const double sg = 1.0 / (1.0 + std::exp(-z[0]));
        const double d1 = sg * (1.0 - sg);
        s0 = sg * (b - a) + a;
        n1 = (b - a) * d1;
        n2 = (b - a) * d1 * (1.0 - 2.0 * sg);
        n3 = (b - a) * d1 * (1.0 - 6.0 * sg + 6.0 * sg * sg);
        break;
      }
      case NormKind::None:
      default:
        if (z[0] < a || z[0] > b) throw std::domain_error("layer input outside the knot domain with no normalizer");
        s0 = z[0];
        n1 = 1.0;
        break;
    }
    nd[0] = n1;
    nd[1] = n2;
    nd[2] = n3;
    chain_forward(z, s0, n1, n2, D, s);

    int cell = L.knots.interval_of(std::clamp(s0, a, b));
    cell = std::clamp(cell, 0, n - 1);
    // knot index `cell` -> 0-based ReLU index cell - base
    const int hi_idx = std::min(cell - base, m - 1);
    int k0, cnt;
    double* f = st.f.data() + static_cast<std::size_t>(p) * m * 4;
    if (spline) {
      k0 = std::max(cell - r + 1 - base, 0);
      cnt = std::min(cell - base, m - 1) - k0 + 1;
      // psi for 0-based indices k0 .. hi_idx
      const int np = hi_idx - k0 + 1;
      for (int j = 0; j < np; ++j) relu_pow_derivs(s0 - L.knots[k0 + j + base], r - 1, psi + 4 * j);
      for (int kk = 0; kk < cnt; ++kk) {
        const int i = k0 + kk;
        double* fk = f + 4 * kk;
        fk[0] = fk[1] = fk[2] = fk[3] = 0.0;
        for (int d = 0; d <= r && i + d <= hi_idx; ++d) {
          const double c = A.band(i, d);
          const double* ps = psi + 4 * (i + d - k0);
          fk[0] += c * ps[0];
          fk[1] += c * ps[1];
          fk[2] += c * ps[2];
          fk[3] += c * ps[3];
        }
      }
    } else {
      k0 = 0;
      cnt = hi_idx + 1;
      for (int kk = 0; kk < cnt; ++kk) relu_pow_derivs(s0 - L.knots[kk + base], r - 1, f + 4 * kk);
    }
    st.k0[p] = k0;
    st.cnt[p] = cnt;
    double* phi = st.phi.data() + static_cast<std::size_t>(p) * m * J;
    for (int kk = 0; kk < cnt; ++kk) chain_forward(s, f[4 * kk], f[4 * kk + 1], f[4 * kk + 2], D, phi + kk * J);
    for (int q = 0; q < Q; ++q) {
      const double* w = L.weights.data() + L.slice(q, p) + k0;
      double* y = st.y.data() + static_cast<std::size_t>(q) * J;
      for (int kk = 0; kk < cnt; ++kk) {
        const double wk = w[kk];
        const double* ph = phi + kk * J;
        for (int c = 0; c < J; ++c) y[c] += wk * ph[c];
      }
    }
  }
}

void Engine::kan_backward(std::size_t l, std::span<const double> y_adj, std::span<double> grad,
                          std::span<double> z_adj, bool need_input) {
  const KanLayer& L = net_.kan[l];
  KanState& st = kan_[l];
  const int J = width_, D = directions();
  const int P = L.in_width, Q = L.out_width, m = L.dim();
  double* g = grad.data() + offsets_[l];
  phibar_.assign(static_cast<std::size_t>(m) * J, 0.0);
  if (need_input) std::fill(z_adj.begin(), z_adj.begin() + static_cast<std::ptrdiff_t>(P) * J, 0.0);
  for (int p = 0; p < P; ++p) {
    const int k0 = st.k0[p], cnt = st.cnt[p];
    const double* phi = st.phi.data() + static_cast<std::size_t>(p) * m * J;
    if (need_input) std::fill(phibar_.begin(), phibar_.begin() + static_cast<std::ptrdiff_t>(cnt) * J, 0.0);
    for (int q = 0; q < Q; ++q) {
      const std::size_t off = L.slice(q, p) + k0;
      const double* w = L.weights.data() + off;
      double* gw = g + off;
      const double* yb = y_adj.data() + static_cast<std::size_t>(q) * J;
      for (int kk = 0; kk < cnt; ++kk) {
        const double* ph = phi + kk * J;
        double acc = 0.0;
        for (int c = 0; c < J; ++c) acc += yb[c] * ph[c];
        gw[kk] += acc;
        if (need_input) {
          double* pb = phibar_.data() + kk * J;
          const double wk = w[kk];
          for (int c = 0; c < J; ++c) pb[c] += wk * yb[c];
        }
      }
    }
    if (!need_input) continue;
    const double* s = st.s.data() + static_cast<std::size_t>(p) * J;
    const double* f = st.f.data() + static_cast<std::size_t>(p) * m * 4;
    double sbar[1 + 2 * 8] = {};
    for (int kk = 0; kk < cnt; ++kk) {
      const double* fk = f + 4 * kk;
      chain_backward(s, phibar_.data() + kk * J, fk[1], fk[2], fk[3], D, sbar);
    }
    const double* z = st.z.data() + static_cast<std::size_t>(p) * J;
    const double* nd = st.nd.data() + static_cast<std::size_t>(p) * 3;
    chain_backward(z, sbar, nd[0], nd[1], nd[2], D, z_adj.data() + static_cast<std::size_t>(p) * J);
  }
}

void Engine::mlp_forward(std::size_t l, std::span<const double> in) {
  const MlpLayer& L = net_.mlp[l];
  MlpState& st = mlp_[l];
  const int J = width_, D = directions();
  const int P = L.in_width, Q = L.out_width;
  std::copy(in.begin(), in.end(), st.z.begin());
  for (int q = 0; q < Q; ++q) {
    double* a = st.a.data() + static_cast<std::size_t>(q) * J;
    std::fill(a, a + J, 0.0);
    a[0] = L.bias[q];
    const double* w = L.weights.data() + static_cast<std::size_t>(q) * P;
    for (int p = 0; p < P; ++p) {
      const double* z = st.z.data() + static_cast<std::size_t>(p) * J;
      for (int c = 0; c < J; ++c) a[c] += w[p] * z[c];
    }
    double g0, g1, g2, g3;
    switch (L.act) {
      case Activation::Tanh: {
        const double t = std::tanh(a[0]);
        g0 = t;
        g1 = 1.0 - t * t;
        g2 = -2.0 * t * g1;
        g3 = -2.0 * (g1 * g1 + t * g2);
        break;
      }
      case Activation::Relu:
        g0 = a[0] > 0.0 ? a[0] : 0.0;
        g1 = a[0] > 0.0 ? 1.0 : 0.0;
        g2 = g3 = 0.0;
        break;
      case Activation::Identity:
      default:
        g0 = a[0];
        g1 = 1.0;
        g2 = g3 = 0.0;
        break;
    }
    double* gq = st.g.data() + static_cast<std::size_t>(q) * 3;
    gq[0] = g1;
    gq[1] = g2;
    gq[2] = g3;
    chain_forward(a, g0, g1, g2, D, st.y.data() + static_cast<std::size_t>(q) * J);
  }
}

void Engine::mlp_backward(std::size_t l, std::span<const double> y_adj, std::span<double> grad,
                          std::span<double> z_adj, bool need_input) {
  const MlpLayer& L = net_.mlp[l];
  MlpState& st = mlp_[l];
  const int J = width_, D = directions();
  const int P = L.in_width, Q = L.out_width;
  double* gw = grad.data() + offsets_[l];
  double* gb = gw + static_cast<std::size_t>(P) * Q;
  if (need_input) std::fill(z_adj.begin(), z_adj.begin() + static_cast<std::ptrdiff_t>(P) * J, 0.0);
  double abar[1 + 2 * 8];
  for (int q = 0; q < Q; ++q) {
    std::fill(abar, abar + J, 0.0);
    const double* gq = st.g.data() + static_cast<std::size_t>(q) * 3;
    const double* a = st.a.data() + static_cast<std::size_t>(q) * J;
    chain_backward(a, y_adj.data() + static_cast<std::size_t>(q) * J, gq[0], gq[1], gq[2], D, abar);
    gb[q] += abar[0];
    const double* w = L.weights.data() + static_cast<std::size_t>(q) * P;
    for (int p = 0; p < P; ++p) {
      const double* z = st.z.data() + static_cast<std::size_t>(p) * J;
      double acc = 0.0;
      for (int c = 0; c < J; ++c) acc += abar[c] * z[c];
      gw[static_cast<std::size_t>(q) * P + p] += acc;
      if (need_input) {
        double* zb = z_adj.data() + static_cast<std::size_t>(p) * J;
        for (int c = 0; c < J; ++c) zb[c] += w[p] * abar[c];
      }
    }
  }
}

void Engine::backward(std::span<const double> out_adj, std::span<double> grad) {
  if (out_adj.size() != out_.size()) throw std::invalid_argument("Engine::backward: adjoint size mismatch");
  if (grad.size() != param_count(net_)) throw std::invalid_argument("Engine::backward: gradient size mismatch");
  std::copy(out_adj.begin(), out_adj.end(), adj_a_.begin());
  const std::size_t J = static_cast<std::size_t>(width_);
  for (std::size_t e = 0; e < dirs_.size(); ++e) {
    if (dirs_[e].second) continue;
    for (std::size_t q = 0; q < out_.size() / J; ++q) adj_a_[q * J + 2 + 2 * e] = 0.0;
  }
  const std::size_t nl = net_.kind == NetKind::Kan ? net_.kan.size() : net_.mlp.size();
  for (std::size_t i = nl; i-- > 0;) {
    const bool need = i > 0;
    if (net_.kind == NetKind::Kan) kan_backward(i, adj_a_, grad, adj_b_, need);
    else mlp_backward(i, adj_a_, grad, adj_b_, need);
    std::swap(adj_a_, adj_b_);
  }
}

}  // namespace mlkan::model
