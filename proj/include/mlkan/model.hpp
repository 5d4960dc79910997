#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlkan/autodiff.hpp"
#include "mlkan/basis.hpp"

namespace mlkan::model {

enum class BasisMode { Spline, Relu };
enum class NormKind { None, Affine, Sigmoid };
enum class Activation { Tanh, Relu, Identity };
enum class Augment { None, AbsX };

std::string to_string(BasisMode m);
std::string to_string(NormKind k);
std::string to_string(Activation a);
BasisMode parse_basis_mode(const std::string& s);
NormKind parse_norm_kind(const std::string& s);
Activation parse_activation(const std::string& s);

/// Maps layer inputs into the knot domain [a, b].
/// Affine sends [lo_p, hi_p] onto [a, b] and clamps outside (clamped values
/// carry zero derivative). Sigmoid uses a + (b - a) sigmoid(z). None demands
/// inputs already inside [a, b].
struct InputMap {
  NormKind kind = NormKind::Affine;
  std::vector<double> lo;
  std::vector<double> hi;
};

struct KanLayer {
  int in_width = 0;
  int out_width = 0;
  basis::KnotVector knots;
  basis::CobMatrix cob;
  BasisMode mode = BasisMode::Spline;
  InputMap map;
  /// W[q][p][k] at (q * in_width + p) * dim + k.
  std::vector<double> weights;

  KanLayer(int in, int out, basis::KnotVector k, BasisMode m, InputMap im);

  int dim() const { return knots.dim(); }
  std::size_t slice(int q, int p) const {
    return (static_cast<std::size_t>(q) * in_width + p) * static_cast<std::size_t>(dim());
  }
  double domain_lower() const { return knots.lower(); }
  double domain_upper() const { return knots.upper(); }
};

struct MlpLayer {
  int in_width = 0;
  int out_width = 0;
  Activation act = Activation::Tanh;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;
};

enum class NetKind { Kan, Mlp };

struct Network {
  NetKind kind = NetKind::Kan;
  Augment augment = Augment::None;
  std::vector<KanLayer> kan;
  std::vector<MlpLayer> mlp;

  int raw_inputs() const;
  int outputs() const;
  std::vector<int> widths() const;
};

struct KanSpec {
  std::vector<int> widths;  // first entry counts the augmented channel if any
  int order = 4;
  int intervals = 4;
  double a = -1.0;
  double b = 1.0;
  BasisMode mode = BasisMode::Spline;
  Augment augment = Augment::None;
  NormKind input_norm = NormKind::Affine;
  std::vector<double> input_lo;  // per network input (after augmentation)
  std::vector<double> input_hi;
  NormKind hidden_norm = NormKind::Affine;
  double hidden_lo = -1.0;
  double hidden_hi = 1.0;
  double init_scale = 0.1;  // std of spline coefficients at initialization
};

struct MlpSpec {
  std::vector<int> widths;
  Activation act = Activation::Tanh;
  Activation output_act = Activation::Identity;
};

/// Builds a KAN whose spline coefficients are N(0, init_scale^2). In Relu
/// mode they are then converted, so both modes start from the same function.
Network make_kan(const KanSpec& spec, std::mt19937_64& rng);
/// Glorot-normal weights, zero bias.
Network make_mlp(const MlpSpec& spec, std::mt19937_64& rng);

std::size_t param_count(const Network& net);
std::vector<double> get_params(const Network& net);
void set_params(Network& net, std::span<const double> p);

/// W = W~ x_3 A^T for every (q, p) slice (the layer is not modified).
std::vector<double> to_relu_weights(const KanLayer& layer);
/// Inverse of to_relu_weights by banded triangular solves.
std::vector<double> to_spline_weights(const KanLayer& layer);
/// Converts weights in place and flips the trainable parameterization.
void convert_layer(KanLayer& layer, BasisMode target);
void convert_network(Network& net, BasisMode target);

/// Block-diagonal change of basis over the flattened KAN parameter vector.
class GlobalCob {
 public:
  explicit GlobalCob(const Network& net);
  std::size_t size() const { return total_; }
  /// y = A^T x per slice (spline coefficients to ReLU weights).
  std::vector<double> apply_transpose(std::span<const double> x) const;
  /// y = A x per slice (maps w-gradients to u-gradients).
  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> solve(std::span<const double> y) const;            // A^{-1}
  std::vector<double> solve_transpose(std::span<const double> y) const;  // A^{-T}

 private:
  struct Block {
    std::size_t mat;
    std::size_t offset;
    std::size_t slices;
    std::size_t dim;
  };
  template <class F>
  std::vector<double> per_slice(std::span<const double> x, F&& f) const;

  std::vector<linalg::BandedUpper> mats_;
  std::vector<Block> blocks_;
  std::size_t total_ = 0;
};

// ----- generic evaluation (double, Var, Jet<double>, Jet<Var>) -----

template <class X>
X map_input(const InputMap& m, int p, const X& z, double a, double b) {
  using ad::lift;
  using ad::value_of;
  switch (m.kind) {
    case NormKind::Affine: {
      const double lo = m.lo[p], hi = m.hi[p];
      const double v = value_of(z);
      if (v < lo) return lift(z, a);
      if (v > hi) return lift(z, b);
      const double c = (b - a) / (hi - lo);
      return z * c + (a - c * lo);
    }
    case NormKind::Sigmoid: {
      using ad::sigmoid;
      return sigmoid(z) * (b - a) + a;
    }
    case NormKind::None: {
      const double v = value_of(z);
      if (v < a || v > b) throw std::domain_error("layer input outside the knot domain with no normalizer");
      return z;
    }
  }
  return z;
}

template <class X, class W>
std::vector<X> kan_layer_eval(const KanLayer& L, std::span<const X> in, std::span<const W> w) {
  using ad::lift;
  using ad::relu_pow;
  if (static_cast<int>(in.size()) != L.in_width) throw std::invalid_argument("kan_layer_eval: width mismatch");
  const int m = L.dim();
  const int r = L.knots.order();
  const int base = L.knots.first_index();
  std::vector<X> out(static_cast<std::size_t>(L.out_width), lift(in[0], 0.0));
  std::vector<X> psi(static_cast<std::size_t>(m), lift(in[0], 0.0));
  std::vector<X> phi(static_cast<std::size_t>(m), lift(in[0], 0.0));
  for (int p = 0; p < L.in_width; ++p) {
    const X s = map_input(L.map, p, in[p], L.domain_lower(), L.domain_upper());
    for (int j = 0; j < m; ++j) psi[j] = relu_pow(s, L.knots[j + base], r - 1);
    if (L.mode == BasisMode::Spline) {
      const auto& A = L.cob.matrix;
      for (int i = 0; i < m; ++i) {
        X acc = psi[i] * A.band(i, 0);
        for (int d = 1; d <= r && i + d < m; ++d) acc = acc + psi[i + d] * A.band(i, d);
        phi[i] = acc;
      }
    } else {
      phi = psi;
    }
    for (int q = 0; q < L.out_width; ++q) {
      const std::size_t off = L.slice(q, p);
      for (int k = 0; k < m; ++k) out[q] = out[q] + phi[k] * w[off + k];
    }
  }
  return out;
}

template <class X>
X apply_activation(Activation act, const X& a) {
  using ad::max0;
  using ad::tanh;
  switch (act) {
    case Activation::Tanh: return tanh(a);
    case Activation::Relu: return max0(a);
    case Activation::Identity: return a;
  }
  return a;
}

template <class X, class W>
std::vector<X> mlp_layer_eval(const MlpLayer& L, std::span<const X> in, std::span<const W> w) {
  if (static_cast<int>(in.size()) != L.in_width) throw std::invalid_argument("mlp_layer_eval: width mismatch");
  const std::size_t nb = static_cast<std::size_t>(L.in_width) * L.out_width;
  std::vector<X> out;
  out.reserve(static_cast<std::size_t>(L.out_width));
  for (int q = 0; q < L.out_width; ++q) {
    X acc = ad::lift(in[0], 0.0) + w[nb + q];
    for (int p = 0; p < L.in_width; ++p) acc = acc + in[p] * w[static_cast<std::size_t>(q) * L.in_width + p];
    out.push_back(apply_activation(L.act, acc));
  }
  return out;
}

template <class X>
std::vector<X> augment_inputs(Augment aug, std::span<const X> raw) {
  using ad::abs;
  std::vector<X> in(raw.begin(), raw.end());
  if (aug == Augment::AbsX) in.push_back(abs(raw[0]));
  return in;
}

/// Evaluates the network with activations of type X and parameters of type W,
/// `params` in the flattened order of get_params().
template <class X, class W>
std::vector<X> network_eval(const Network& net, std::span<const X> raw, std::span<const W> params) {
  if (static_cast<int>(raw.size()) != net.raw_inputs()) throw std::invalid_argument("network_eval: input width mismatch");
  if (params.size() != param_count(net)) throw std::invalid_argument("network_eval: parameter count mismatch");
  std::vector<X> cur = augment_inputs<X>(net.augment, raw);
  std::size_t off = 0;
  if (net.kind == NetKind::Kan) {
    for (const auto& L : net.kan) {
      const std::size_t n = L.weights.size();
      cur = kan_layer_eval<X, W>(L, cur, params.subspan(off, n));
      off += n;
    }
  } else {
    for (const auto& L : net.mlp) {
      const std::size_t n = L.weights.size() + L.bias.size();
      cur = mlp_layer_eval<X, W>(L, cur, params.subspan(off, n));
      off += n;
    }
  }
  return cur;
}

// ----- double-precision paths -----

/// Change-of-basis layer evaluation: ReLU powers, banded A, contraction.
std::vector<double> forward_spline(const KanLayer& layer, std::span<const double> x);
/// Direct truncated-power contraction with the ReLU weights of this layer.
std::vector<double> forward_relu(const KanLayer& layer, std::span<const double> x);
/// Reference path: full Cox-de Boor table recomputed for every edge.
std::vector<double> forward_coxdeboor(const KanLayer& layer, std::span<const double> x);

struct NetworkOutput {
  std::vector<std::vector<double>> value;  // [sample][output]
  std::vector<std::vector<double>> d1;     // filled when a seed is given
  std::vector<std::vector<double>> d2;
};
/// Batch evaluation; with a seed direction also returns first and second
/// directional derivatives along it.
NetworkOutput network_forward(const Network& net, const std::vector<std::vector<double>>& x,
                              std::span<const double> seed = {});

// ----- benchmark layer passes (batched, forward + backward) -----

struct LayerPassBuffers {
  std::vector<double> out;
  std::vector<double> grad_w;
  std::vector<double> grad_x;
};
/// Forward over a batch, then backward for an upstream gradient of all ones;
/// accumulates weight and input gradients. `fast` selects the change-of-basis
/// path; otherwise each edge runs its own Cox-de Boor recursion.
void layer_pass(const KanLayer& layer, std::span<const double> x_batch, int batch, bool fast,
                LayerPassBuffers& buf);

// ----- checkpoint -----

void save_weights(const Network& net, std::ostream& os);
/// Reads a checkpoint written by save_weights into a network of matching
/// architecture; throws on any header mismatch.
void load_weights(Network& net, std::istream& is);

}  // namespace mlkan::model
