#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mlkan::ad {

enum class Op : std::uint8_t {
  Const,
  Param,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Affine,   // c0 * a + c1
  PowInt,   // a^k
  ReluPow,  // max(a - c0, 0)^k, k = 0 is the step 1{a >= c0}
  Sin,
  Cos,
  Tanh,
  Sigmoid,
  Exp,
  Abs,      // derivative 0 at 0
  Max0,     // derivative 0 at 0
};

struct Node {
  Op op = Op::Const;
  int a = -1;
  int b = -1;
  int k = 0;
  double c0 = 0.0;
  double c1 = 0.0;
  double value = 0.0;
  double da = 0.0;
  double db = 0.0;
};

/// Append-only record of scalar operations. Operands always precede results.
class Tape {
 public:
  int constant(double v);
  /// Registers a trainable parameter; its id is its position in `params()`.
  int parameter(double v);
  int record(Op op, int a, int b = -1, double c0 = 0.0, double c1 = 0.0, int k = 0);

  double value(int node) const { return nodes_.at(static_cast<std::size_t>(node)).value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<int>& params() const noexcept { return params_; }
  const Node& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }

  /// Adjoint of every node with respect to `output`.
  std::vector<double> adjoints(int output) const;
  /// d output / d parameter, ordered by parameter id.
  std::vector<double> backward(int output) const;

  /// Re-evaluates every node with new parameter values, in recording order.
  void replay(std::span<const double> param_values);

  void clear();

 private:
  void evaluate(Node& n) const;

  std::vector<Node> nodes_;
  std::vector<int> params_;
};

/// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int index = -1;

  double value() const { return tape->value(index); }
};

Var make_param(Tape& t, double v);
Var make_const(Tape& t, double v);

namespace detail {
inline Tape* same_tape(const Var& x, const Var& y) {
  if (x.tape != y.tape) throw std::invalid_argument("ad: operands recorded on different tapes");
  return x.tape;
}
}  // namespace detail

inline Var operator+(const Var& x, const Var& y) { return {detail::same_tape(x, y), x.tape->record(Op::Add, x.index, y.index)}; }
inline Var operator-(const Var& x, const Var& y) { return {detail::same_tape(x, y), x.tape->record(Op::Sub, x.index, y.index)}; }
inline Var operator*(const Var& x, const Var& y) { return {detail::same_tape(x, y), x.tape->record(Op::Mul, x.index, y.index)}; }
inline Var operator/(const Var& x, const Var& y) { return {detail::same_tape(x, y), x.tape->record(Op::Div, x.index, y.index)}; }
inline Var operator-(const Var& x) { return {x.tape, x.tape->record(Op::Neg, x.index)}; }
inline Var affine(const Var& x, double scale, double shift) {
  return {x.tape, x.tape->record(Op::Affine, x.index, -1, scale, shift)};
}
inline Var operator+(const Var& x, double c) { return affine(x, 1.0, c); }
inline Var operator+(double c, const Var& x) { return affine(x, 1.0, c); }
inline Var operator-(const Var& x, double c) { return affine(x, 1.0, -c); }
inline Var operator-(double c, const Var& x) { return affine(x, -1.0, c); }
inline Var operator*(const Var& x, double c) { return affine(x, c, 0.0); }
inline Var operator*(double c, const Var& x) { return affine(x, c, 0.0); }
inline Var operator/(const Var& x, double c) { return affine(x, 1.0 / c, 0.0); }
inline Var operator/(double c, const Var& x) { return make_const(*x.tape, c) / x; }
inline Var& operator+=(Var& x, const Var& y) { return x = x + y; }
inline Var& operator-=(Var& x, const Var& y) { return x = x - y; }
inline Var& operator*=(Var& x, const Var& y) { return x = x * y; }

inline Var pow_int(const Var& x, int k) { return {x.tape, x.tape->record(Op::PowInt, x.index, -1, 0.0, 0.0, k)}; }
inline Var relu_pow(const Var& x, double t, int k) {
  return {x.tape, x.tape->record(Op::ReluPow, x.index, -1, t, 0.0, k)};
}
inline Var sin(const Var& x) { return {x.tape, x.tape->record(Op::Sin, x.index)}; }
inline Var cos(const Var& x) { return {x.tape, x.tape->record(Op::Cos, x.index)}; }
inline Var tanh(const Var& x) { return {x.tape, x.tape->record(Op::Tanh, x.index)}; }
inline Var sigmoid(const Var& x) { return {x.tape, x.tape->record(Op::Sigmoid, x.index)}; }
inline Var exp(const Var& x) { return {x.tape, x.tape->record(Op::Exp, x.index)}; }
inline Var abs(const Var& x) { return {x.tape, x.tape->record(Op::Abs, x.index)}; }
inline Var max0(const Var& x) { return {x.tape, x.tape->record(Op::Max0, x.index)}; }

// Scalar overloads so generic code can run on plain doubles.
inline double relu_pow(double x, double t, int k) {
  const double z = x - t;
  if (k == 0) return z >= 0.0 ? 1.0 : 0.0;
  if (z <= 0.0) return 0.0;
  double r = z;
  for (int i = 1; i < k; ++i) r *= z;
  return r;
}
inline double pow_int(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double max0(double x) { return x > 0.0 ? x : 0.0; }
using std::abs;
using std::cos;
using std::exp;
using std::sin;
using std::tanh;

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.value(); }
/// A constant of the same scalar kind as `like`.
inline double lift(double, double c) { return c; }
inline Var lift(const Var& like, double c) { return make_const(*like.tape, c); }

/// Second-order jet along one seed direction. S is double or Var; with Var
/// the derivative components are tape nodes and can be differentiated again.
template <class S>
struct Jet {
  S v;
  S d1;
  S d2;
};

template <class S>
Jet<S> jet_const(const S& like, double c) {
  return {lift(like, c), lift(like, 0.0), lift(like, 0.0)};
}

/// Chain rule for g(u): (g, g' u1, g'' u1^2 + g' u2).
template <class S>
Jet<S> jet_chain(const Jet<S>& u, const S& g0, const S& g1, const S& g2) {
  return {g0, g1 * u.d1, g2 * (u.d1 * u.d1) + g1 * u.d2};
}

template <class S>
Jet<S> operator+(const Jet<S>& x, const Jet<S>& y) { return {x.v + y.v, x.d1 + y.d1, x.d2 + y.d2}; }
template <class S>
Jet<S> operator-(const Jet<S>& x, const Jet<S>& y) { return {x.v - y.v, x.d1 - y.d1, x.d2 - y.d2}; }
template <class S>
Jet<S> operator-(const Jet<S>& x) { return {-x.v, -x.d1, -x.d2}; }
template <class S>
Jet<S> operator*(const Jet<S>& x, const Jet<S>& y) {
  return {x.v * y.v, x.d1 * y.v + x.v * y.d1, x.d2 * y.v + 2.0 * (x.d1 * y.d1) + x.v * y.d2};
}
template <class S>
Jet<S> operator/(const Jet<S>& x, const Jet<S>& y) {
  const S q = x.v / y.v;
  const S q1 = (x.d1 - q * y.d1) / y.v;
  const S q2 = (x.d2 - 2.0 * (q1 * y.d1) - q * y.d2) / y.v;
  return {q, q1, q2};
}
template <class S>
Jet<S>& operator+=(Jet<S>& x, const Jet<S>& y) { return x = x + y; }

// Jet combined with a scalar of the underlying kind (e.g. a weight).
template <class S>
Jet<S> operator*(const Jet<S>& x, const S& c) { return {x.v * c, x.d1 * c, x.d2 * c}; }
template <class S>
Jet<S> operator*(const S& c, const Jet<S>& x) { return x * c; }
template <class S>
Jet<S> operator+(const Jet<S>& x, const S& c) { return {x.v + c, x.d1, x.d2}; }

// Jet combined with a plain double (skipped when S is already double).
template <class S, class = std::enable_if_t<!std::is_same_v<S, double>>>
Jet<S> operator*(const Jet<S>& x, double c) { return {x.v * c, x.d1 * c, x.d2 * c}; }
template <class S, class = std::enable_if_t<!std::is_same_v<S, double>>>
Jet<S> operator*(double c, const Jet<S>& x) { return x * c; }
template <class S, class = std::enable_if_t<!std::is_same_v<S, double>>>
Jet<S> operator+(const Jet<S>& x, double c) { return {x.v + c, x.d1, x.d2}; }
template <class S, class = std::enable_if_t<!std::is_same_v<S, double>>>
Jet<S> operator-(const Jet<S>& x, double c) { return {x.v - c, x.d1, x.d2}; }
inline Jet<double> operator*(const Jet<double>& x, double c) { return {x.v * c, x.d1 * c, x.d2 * c}; }
inline Jet<double> operator*(double c, const Jet<double>& x) { return x * c; }
inline Jet<double> operator+(const Jet<double>& x, double c) { return {x.v + c, x.d1, x.d2}; }
inline Jet<double> operator-(const Jet<double>& x, double c) { return {x.v - c, x.d1, x.d2}; }

template <class S>
Jet<S> sin(const Jet<S>& u) {
  const S s = sin(u.v), c = cos(u.v);
  return jet_chain(u, s, c, -s);
}
template <class S>
Jet<S> cos(const Jet<S>& u) {
  const S s = sin(u.v), c = cos(u.v);
  return jet_chain(u, c, -s, -c);
}
template <class S>
Jet<S> exp(const Jet<S>& u) {
  const S e = exp(u.v);
  return jet_chain(u, e, e, e);
}
template <class S>
Jet<S> tanh(const Jet<S>& u) {
  const S t = tanh(u.v);
  const S g1 = 1.0 - t * t;
  return jet_chain(u, t, g1, -2.0 * (t * g1));
}
template <class S>
Jet<S> sigmoid(const Jet<S>& u) {
  const S s = sigmoid(u.v);
  const S g1 = s * (1.0 - s);
  return jet_chain(u, s, g1, g1 * (1.0 - 2.0 * s));
}
template <class S>
Jet<S> pow_int(const Jet<S>& u, int k) {
  const S zero = lift(u.v, 0.0);
  const S g0 = pow_int(u.v, k);
  const S g1 = k >= 1 ? static_cast<double>(k) * pow_int(u.v, k - 1) : zero;
  const S g2 = k >= 2 ? static_cast<double>(k * (k - 1)) * pow_int(u.v, k - 2) : zero;
  return jet_chain(u, g0, g1, g2);
}
template <class S>
Jet<S> relu_pow(const Jet<S>& u, double t, int k) {
  const S zero = lift(u.v, 0.0);
  const S g0 = relu_pow(u.v, t, k);
  const S g1 = k >= 1 ? static_cast<double>(k) * relu_pow(u.v, t, k - 1) : zero;
  const S g2 = k >= 2 ? static_cast<double>(k * (k - 1)) * relu_pow(u.v, t, k - 2) : zero;
  return jet_chain(u, g0, g1, g2);
}
template <class S>
Jet<S> abs(const Jet<S>& u) {
  const double x = value_of(u.v);
  const double sg = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  return jet_chain(u, abs(u.v), lift(u.v, sg), lift(u.v, 0.0));
}
template <class S>
Jet<S> max0(const Jet<S>& u) {
  const double x = value_of(u.v);
  return jet_chain(u, max0(u.v), lift(u.v, x > 0.0 ? 1.0 : 0.0), lift(u.v, 0.0));
}

template <class S>
double value_of(const Jet<S>& x) { return value_of(x.v); }
template <class S>
Jet<S> lift(const Jet<S>& like, double c) { return jet_const(like.v, c); }

/// Seeds each input with (x_i, seed_i, 0) and evaluates `f` on the jets.
template <class S, class F>
auto forward_jet(F&& f, std::span<const S> x, std::span<const double> seed) {
  if (x.size() != seed.size()) throw std::invalid_argument("forward_jet: seed length mismatch");
  std::vector<Jet<S>> in;
  in.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) in.push_back({x[i], lift(x[i], seed[i]), lift(x[i], 0.0)});
  return f(std::span<const Jet<S>>(in));
}

}  // namespace mlkan::ad
