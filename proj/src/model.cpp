#include "mlkan/model.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace mlkan::model {

std::string to_string(BasisMode m) { return m == BasisMode::Spline ? "spline" : "relu"; }

std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::None: return "none";
    case NormKind::Affine: return "affine";
    case NormKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "?";
}

BasisMode parse_basis_mode(const std::string& s) {
  if (s == "spline") return BasisMode::Spline;
  if (s == "relu") return BasisMode::Relu;
  throw std::invalid_argument("unknown basis '" + s + "' (expected spline or relu)");
}

NormKind parse_norm_kind(const std::string& s) {
  if (s == "none") return NormKind::None;
  if (s == "affine") return NormKind::Affine;
  if (s == "sigmoid") return NormKind::Sigmoid;
  throw std::invalid_argument("unknown normalizer '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

KanLayer::KanLayer(int in, int out, basis::KnotVector k, BasisMode m, InputMap im)
    : in_width(in), out_width(out), knots(std::move(k)), cob(basis::build_cob(knots)), mode(m), map(std::move(im)) {
  if (in < 1 || out < 1) throw std::invalid_argument("KanLayer: widths must be positive");
  if (map.kind == NormKind::Affine) {
    if (static_cast<int>(map.lo.size()) != in || static_cast<int>(map.hi.size()) != in) {
      throw std::invalid_argument("KanLayer: affine map needs one range per input");
    }
    for (int p = 0; p < in; ++p)
      if (!(map.lo[p] < map.hi[p])) throw std::invalid_argument("KanLayer: affine range must satisfy lo < hi");
  }
  weights.assign(static_cast<std::size_t>(in) * out * dim(), 0.0);
}

int Network::raw_inputs() const {
  const int first = kind == NetKind::Kan ? kan.front().in_width : mlp.front().in_width;
  return augment == Augment::AbsX ? first - 1 : first;
}

int Network::outputs() const { return kind == NetKind::Kan ? kan.back().out_width : mlp.back().out_width; }

std::vector<int> Network::widths() const {
  std::vector<int> w;
  if (kind == NetKind::Kan) {
    w.push_back(kan.front().in_width);
    for (const auto& L : kan) w.push_back(L.out_width);
  } else {
    w.push_back(mlp.front().in_width);
    for (const auto& L : mlp) w.push_back(L.out_width);
  }
  return w;
}

Network make_kan(const KanSpec& spec, std::mt19937_64& rng) {
  if (spec.widths.size() < 2) throw std::invalid_argument("make_kan: need at least two widths");
  if (spec.augment == Augment::AbsX && spec.widths[0] < 2) throw std::invalid_argument("make_kan: augmentation needs 2+ inputs");
  Network net;
  net.kind = NetKind::Kan;
  net.augment = spec.augment;
  std::normal_distribution<double> normal(0.0, spec.init_scale);
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const int P = spec.widths[l], Q = spec.widths[l + 1];
    InputMap im;
    if (l == 0) {
      im.kind = spec.input_norm;
      im.lo = spec.input_lo.empty() ? std::vector<double>(P, spec.a) : spec.input_lo;
      im.hi = spec.input_hi.empty() ? std::vector<double>(P, spec.b) : spec.input_hi;
    } else {
      im.kind = spec.hidden_norm;
      im.lo.assign(P, spec.hidden_lo);
      im.hi.assign(P, spec.hidden_hi);
    }
    KanLayer L(P, Q, basis::make_uniform_knots(spec.a, spec.b, spec.intervals, spec.order), BasisMode::Spline, im);
    for (auto& w : L.weights) w = normal(rng);
    net.kan.push_back(std::move(L));
  }
  if (spec.mode == BasisMode::Relu) convert_network(net, BasisMode::Relu);
  return net;
}

Network make_mlp(const MlpSpec& spec, std::mt19937_64& rng) {
  if (spec.widths.size() < 2) throw std::invalid_argument("make_mlp: need at least two widths");
  Network net;
  net.kind = NetKind::Mlp;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    MlpLayer L;
    L.in_width = spec.widths[l];
    L.out_width = spec.widths[l + 1];
    L.act = (l + 2 == spec.widths.size()) ? spec.output_act : spec.act;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (L.in_width + L.out_width)));
    L.weights.resize(static_cast<std::size_t>(L.in_width) * L.out_width);
    for (auto& w : L.weights) w = normal(rng);
    L.bias.assign(static_cast<std::size_t>(L.out_width), 0.0);
    net.mlp.push_back(std::move(L));
  }
  return net;
}

std::size_t param_count(const Network& net) {
  std::size_t n = 0;
  if (net.kind == NetKind::Kan) {
    for (const auto& L : net.kan) n += L.weights.size();
  } else {
    for (const auto& L : net.mlp) n += L.weights.size() + L.bias.size();
  }
  return n;
}

std::vector<double> get_params(const Network& net) {
  std::vector<double> p;
  p.reserve(param_count(net));
  if (net.kind == NetKind::Kan) {
    for (const auto& L : net.kan) p.insert(p.end(), L.weights.begin(), L.weights.end());
  } else {
    for (const auto& L : net.mlp) {
      p.insert(p.end(), L.weights.begin(), L.weights.end());
      p.insert(p.end(), L.bias.begin(), L.bias.end());
    }
  }
  return p;
}

void set_params(Network& net, std::span<const double> p) {
  if (p.size() != param_count(net)) throw std::invalid_argument("set_params: parameter count mismatch");
  std::size_t off = 0;
  auto take = [&](std::vector<double>& dst) {
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(off), p.begin() + static_cast<std::ptrdiff_t>(off + dst.size()),
              dst.begin());
    off += dst.size();
  };
  if (net.kind == NetKind::Kan) {
    for (auto& L : net.kan) take(L.weights);
  } else {
    for (auto& L : net.mlp) {
      take(L.weights);
      take(L.bias);
    }
  }
}

namespace {

std::vector<double> map_slices(const KanLayer& layer, bool to_relu) {
  const std::size_t m = static_cast<std::size_t>(layer.dim());
  std::vector<double> out(layer.weights.size());
  for (std::size_t off = 0; off < layer.weights.size(); off += m) {
    std::span<const double> src(layer.weights.data() + off, m);
    if (to_relu) {
      linalg::banded_matvec_into(layer.cob.matrix, src, std::span<double>(out.data() + off, m), true);
    } else {
      const auto u = linalg::banded_upper_solve(layer.cob.matrix, src, true);
      std::copy(u.begin(), u.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
    }
  }
  return out;
}

}  // namespace

std::vector<double> to_relu_weights(const KanLayer& layer) {
  return layer.mode == BasisMode::Relu ? layer.weights : map_slices(layer, true);
}

std::vector<double> to_spline_weights(const KanLayer& layer) {
  return layer.mode == BasisMode::Spline ? layer.weights : map_slices(layer, false);
}

void convert_layer(KanLayer& layer, BasisMode target) {
  if (layer.mode == target) return;
  layer.weights = target == BasisMode::Relu ? to_relu_weights(layer) : to_spline_weights(layer);
  layer.mode = target;
}

void convert_network(Network& net, BasisMode target) {
  if (net.kind != NetKind::Kan) throw std::invalid_argument("convert_network: not a KAN");
  for (auto& L : net.kan) convert_layer(L, target);
}

GlobalCob::GlobalCob(const Network& net) {
  if (net.kind != NetKind::Kan) throw std::invalid_argument("GlobalCob: not a KAN");
  mats_.reserve(net.kan.size());
  for (const auto& L : net.kan) mats_.push_back(L.cob.matrix);
  std::size_t off = 0;
  for (std::size_t l = 0; l < net.kan.size(); ++l) {
    const auto& L = net.kan[l];
    const std::size_t dim = static_cast<std::size_t>(L.dim());
    blocks_.push_back({l, off, L.weights.size() / dim, dim});
    off += L.weights.size();
  }
  total_ = off;
}

template <class F>
std::vector<double> GlobalCob::per_slice(std::span<const double> x, F&& f) const {
  if (x.size() != total_) throw std::invalid_argument("GlobalCob: vector length mismatch");
  std::vector<double> y(total_);
  for (const auto& b : blocks_)
    for (std::size_t s = 0; s < b.slices; ++s) {
      const std::size_t o = b.offset + s * b.dim;
      f(mats_[b.mat], x.subspan(o, b.dim), std::span<double>(y.data() + o, b.dim));
    }
  return y;
}

std::vector<double> GlobalCob::apply_transpose(std::span<const double> x) const {
  return per_slice(x, [](const linalg::BandedUpper& a, std::span<const double> in, std::span<double> out) {
    linalg::banded_matvec_into(a, in, out, true);
  });
}

std::vector<double> GlobalCob::apply(std::span<const double> x) const {
  return per_slice(x, [](const linalg::BandedUpper& a, std::span<const double> in, std::span<double> out) {
    linalg::banded_matvec_into(a, in, out, false);
  });
}

std::vector<double> GlobalCob::solve(std::span<const double> y) const {
  return per_slice(y, [](const linalg::BandedUpper& a, std::span<const double> in, std::span<double> out) {
    const auto v = linalg::banded_upper_solve(a, in, false);
    std::copy(v.begin(), v.end(), out.begin());
  });
}

std::vector<double> GlobalCob::solve_transpose(std::span<const double> y) const {
  return per_slice(y, [](const linalg::BandedUpper& a, std::span<const double> in, std::span<double> out) {
    const auto v = linalg::banded_upper_solve(a, in, true);
    std::copy(v.begin(), v.end(), out.begin());
  });
}

namespace {

void check_width(const KanLayer& layer, std::span<const double> x) {
  if (static_cast<int>(x.size()) != layer.in_width) throw std::invalid_argument("layer forward: width mismatch");
}

// psi_j(s) for every basis index j (0-based).
void relu_powers(const KanLayer& layer, double s, std::vector<double>& psi) {
  const int m = layer.dim();
  const int base = layer.knots.first_index();
  const int deg = layer.knots.order() - 1;
  psi.resize(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) psi[j] = ad::relu_pow(s, layer.knots[j + base], deg);
}

// Full Cox-de Boor table at x; returns order-r values in `vals` and, when
// `deriv` is non-null, their x-derivatives from the order r-1 row.
void coxdeboor_table(const basis::KnotVector& k, double x, std::vector<double>& work, std::vector<double>& prev,
                     std::vector<double>* vals, std::vector<double>* deriv) {
  const int r = k.order();
  const int first = k.first_index();
  const int n_int = k.intervals() + 2 * r - 2;  // order-1 functions over the extended grid
  work.assign(static_cast<std::size_t>(n_int), 0.0);
  const int cell = k.interval_of(x);
  for (int j = 0; j < n_int; ++j) work[j] = (j + first == cell) ? 1.0 : 0.0;
  for (int s = 2; s <= r; ++s) {
    if (s == r && deriv) prev.assign(work.begin(), work.end());
    const int count = n_int - s + 1;
    for (int j = 0; j < count; ++j) {
      const int t = j + first;
      work[j] = (x - k[t]) / (k[t + s - 1] - k[t]) * work[j] + (k[t + s] - x) / (k[t + s] - k[t + 1]) * work[j + 1];
    }
  }
  const int m = k.dim();
  if (vals) vals->assign(work.begin(), work.begin() + m);
  if (deriv) {
    deriv->assign(static_cast<std::size_t>(m), 0.0);
    if (r >= 2) {
      for (int j = 0; j < m; ++j) {
        const int t = j + first;
        (*deriv)[j] = (r - 1) * (prev[j] / (k[t + r - 1] - k[t]) - prev[j + 1] / (k[t + r] - k[t + 1]));
      }
    }
  }
}

}  // namespace

std::vector<double> forward_spline(const KanLayer& layer, std::span<const double> x) {
  check_width(layer, x);
  const auto u = to_spline_weights(layer);
  const int m = layer.dim();
  std::vector<double> out(static_cast<std::size_t>(layer.out_width), 0.0);
  std::vector<double> psi, phi(static_cast<std::size_t>(m));
  for (int p = 0; p < layer.in_width; ++p) {
    const double s = map_input(layer.map, p, x[p], layer.domain_lower(), layer.domain_upper());
    relu_powers(layer, s, psi);
    linalg::banded_matvec_into(layer.cob.matrix, psi, phi, false);
    for (int q = 0; q < layer.out_width; ++q) {
      const double* w = u.data() + layer.slice(q, p);
      double acc = 0.0;
      for (int k = 0; k < m; ++k) acc += w[k] * phi[k];
      out[q] += acc;
    }
  }
  return out;
}

std::vector<double> forward_relu(const KanLayer& layer, std::span<const double> x) {
  check_width(layer, x);
  const auto w = to_relu_weights(layer);
  const int m = layer.dim();
  std::vector<double> out(static_cast<std::size_t>(layer.out_width), 0.0);
  std::vector<double> psi;
  for (int p = 0; p < layer.in_width; ++p) {
    const double s = map_input(layer.map, p, x[p], layer.domain_lower(), layer.domain_upper());
    relu_powers(layer, s, psi);
    for (int q = 0; q < layer.out_width; ++q) {
      const double* wq = w.data() + layer.slice(q, p);
      double acc = 0.0;
      for (int k = 0; k < m; ++k) acc += wq[k] * psi[k];
      out[q] += acc;
    }
  }
  return out;
}

std::vector<double> forward_coxdeboor(const KanLayer& layer, std::span<const double> x) {
  check_width(layer, x);
  const auto u = to_spline_weights(layer);
  const int m = layer.dim();
  std::vector<double> out(static_cast<std::size_t>(layer.out_width), 0.0);
  std::vector<double> work, prev, vals;
  for (int p = 0; p < layer.in_width; ++p) {
    const double s = map_input(layer.map, p, x[p], layer.domain_lower(), layer.domain_upper());
    for (int q = 0; q < layer.out_width; ++q) {
      coxdeboor_table(layer.knots, s, work, prev, &vals, nullptr);
      const double* w = u.data() + layer.slice(q, p);
      double acc = 0.0;
      for (int k = 0; k < m; ++k) acc += w[k] * vals[k];
      out[q] += acc;
    }
  }
  return out;
}

NetworkOutput network_forward(const Network& net, const std::vector<std::vector<double>>& x,
                              std::span<const double> seed) {
  const auto params = get_params(net);
  NetworkOutput res;
  res.value.reserve(x.size());
  const bool jets = !seed.empty();
  if (jets && static_cast<int>(seed.size()) != net.raw_inputs()) {
    throw std::invalid_argument("network_forward: seed length mismatch");
  }
  for (const auto& xi : x) {
    if (static_cast<int>(xi.size()) != net.raw_inputs()) throw std::invalid_argument("network_forward: input width mismatch");
    if (!jets) {
      res.value.push_back(network_eval<double, double>(net, xi, params));
      continue;
    }
    const auto out = ad::forward_jet<double>(
        [&](std::span<const ad::Jet<double>> in) { return network_eval<ad::Jet<double>, double>(net, in, params); },
        std::span<const double>(xi), seed);
    std::vector<double> v, d1, d2;
    for (const auto& j : out) {
      v.push_back(j.v);
      d1.push_back(j.d1);
      d2.push_back(j.d2);
    }
    res.value.push_back(std::move(v));
    res.d1.push_back(std::move(d1));
    res.d2.push_back(std::move(d2));
  }
  return res;
}

void layer_pass(const KanLayer& layer, std::span<const double> x_batch, int batch, bool fast, LayerPassBuffers& buf) {
  const int P = layer.in_width, Q = layer.out_width, m = layer.dim();
  if (static_cast<int>(x_batch.size()) != batch * P) throw std::invalid_argument("layer_pass: batch shape mismatch");
  buf.out.assign(static_cast<std::size_t>(batch) * Q, 0.0);
  buf.grad_w.assign(layer.weights.size(), 0.0);
  buf.grad_x.assign(static_cast<std::size_t>(batch) * P, 0.0);
  const double a = layer.domain_lower(), b = layer.domain_upper();
  const std::vector<double>& u = layer.weights;
  const int r = layer.knots.order();
  const int base = layer.knots.first_index();
  std::vector<double> psi(m), dpsi(m), phi(m), dphi(m), work, prev, vals, dvals;
  for (int s = 0; s < batch; ++s) {
    for (int p = 0; p < P; ++p) {
      const double xs = x_batch[static_cast<std::size_t>(s) * P + p];
      const double z = map_input(layer.map, p, xs, a, b);
      double gx = 0.0;
      if (fast) {
        for (int j = 0; j < m; ++j) {
          const double t = layer.knots[j + base];
          psi[j] = ad::relu_pow(z, t, r - 1);
          dpsi[j] = r >= 2 ? (r - 1) * ad::relu_pow(z, t, r - 2) : 0.0;
        }
        linalg::banded_matvec_into(layer.cob.matrix, psi, phi, false);
        linalg::banded_matvec_into(layer.cob.matrix, dpsi, dphi, false);
        for (int q = 0; q < Q; ++q) {
          const std::size_t off = layer.slice(q, p);
          double acc = 0.0, dacc = 0.0;
          for (int k = 0; k < m; ++k) {
            acc += u[off + k] * phi[k];
            dacc += u[off + k] * dphi[k];
            buf.grad_w[off + k] += phi[k];
          }
          buf.out[static_cast<std::size_t>(s) * Q + q] += acc;
          gx += dacc;
        }
      } else {
        for (int q = 0; q < Q; ++q) {
          coxdeboor_table(layer.knots, z, work, prev, &vals, &dvals);
          const std::size_t off = layer.slice(q, p);
          double acc = 0.0, dacc = 0.0;
          for (int k = 0; k < m; ++k) {
            acc += u[off + k] * vals[k];
            dacc += u[off + k] * dvals[k];
            buf.grad_w[off + k] += vals[k];
          }
          buf.out[static_cast<std::size_t>(s) * Q + q] += acc;
          gx += dacc;
        }
      }
      buf.grad_x[static_cast<std::size_t>(s) * P + p] = gx;
    }
  }
}

void save_weights(const Network& net, std::ostream& os) {
  os << "mlkan-weights v1\n";
  os << "kind " << (net.kind == NetKind::Kan ? "kan" : "mlp") << "\n";
  os << "widths";
  for (int w : net.widths()) os << ' ' << w;
  os << "\n";
  os << "augment " << (net.augment == Augment::AbsX ? "absx" : "none") << "\n";
  if (net.kind == NetKind::Kan) {
    os << "order " << net.kan.front().knots.order() << "\n";
    os << "knots";
    for (const auto& L : net.kan) os << ' ' << L.knots.intervals();
    os << "\n";
    os << std::setprecision(17);
    os << "domain " << net.kan.front().domain_lower() << ' ' << net.kan.front().domain_upper() << "\n";
    os << "basis_mode " << to_string(net.kan.front().mode) << "\n";
    os << "normalizer";
    for (const auto& L : net.kan) os << ' ' << to_string(L.map.kind);
    os << "\n";
  } else {
    os << "activation";
    for (const auto& L : net.mlp) os << ' ' << to_string(L.act);
    os << "\n";
  }
  const auto p = get_params(net);
  os << "count " << p.size() << "\n";
  os << std::setprecision(17);
  for (double v : p) os << v << "\n";
}

void load_weights(Network& net, std::istream& is) {
  std::string line;
  auto expect = [&](const std::string& key) -> std::istringstream {
    if (!std::getline(is, line)) throw std::runtime_error("load_weights: truncated header, expected '" + key + "'");
    std::istringstream ss(line);
    std::string k;
    ss >> k;
    if (k != key) throw std::runtime_error("load_weights: expected '" + key + "', found '" + k + "'");
    return ss;
  };
  if (!std::getline(is, line) || line != "mlkan-weights v1") throw std::runtime_error("load_weights: bad magic line");
  {
    auto ss = expect("kind");
    std::string kind;
    ss >> kind;
    if (kind != (net.kind == NetKind::Kan ? "kan" : "mlp")) throw std::runtime_error("load_weights: network kind mismatch");
  }
  {
    auto ss = expect("widths");
    std::vector<int> w;
    int v;
    while (ss >> v) w.push_back(v);
    if (w != net.widths()) throw std::runtime_error("load_weights: widths mismatch");
  }
  {
    auto ss = expect("augment");
    std::string a;
    ss >> a;
    if (a != (net.augment == Augment::AbsX ? "absx" : "none")) throw std::runtime_error("load_weights: augment mismatch");
  }
  if (net.kind == NetKind::Kan) {
    {
      auto ss = expect("order");
      int r;
      ss >> r;
      if (r != net.kan.front().knots.order()) throw std::runtime_error("load_weights: order mismatch");
    }
    {
      auto ss = expect("knots");
      for (const auto& L : net.kan) {
        int n = 0;
        ss >> n;
        if (n != L.knots.intervals()) throw std::runtime_error("load_weights: knot count mismatch");
      }
    }
    expect("domain");
    {
      auto ss = expect("basis_mode");
      std::string m;
      ss >> m;
      convert_network(net, parse_basis_mode(m));
    }
    expect("normalizer");
  } else {
    expect("activation");
  }
  std::size_t count = 0;
  {
    auto ss = expect("count");
    ss >> count;
    if (count != param_count(net)) throw std::runtime_error("load_weights: parameter count mismatch");
  }
  std::vector<double> p(count);
  for (auto& v : p)
    if (!(is >> v)) throw std::runtime_error("load_weights: truncated parameter list");
  set_params(net, p);
}

}  // namespace mlkan::model
