#include "mlkan/autodiff.hpp"

#include <string>

namespace mlkan::ad {

int Tape::constant(double v) {
  Node n;
  n.op = Op::Const;
  n.value = v;
  nodes_.push_back(n);
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::parameter(double v) {
  Node n;
  n.op = Op::Param;
  n.value = v;
  n.k = static_cast<int>(params_.size());
  nodes_.push_back(n);
  params_.push_back(static_cast<int>(nodes_.size()) - 1);
  return params_.back();
}

int Tape::record(Op op, int a, int b, double c0, double c1, int k) {
  const int sz = static_cast<int>(nodes_.size());
  const bool binary = op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div;
  if (op == Op::Const || op == Op::Param) throw std::invalid_argument("Tape::record: use constant()/parameter()");
  if (a < 0 || a >= sz || (binary && (b < 0 || b >= sz))) {
    throw std::out_of_range("Tape::record: invalid operand index (tape size " + std::to_string(sz) + ")");
  }
  Node n;
  n.op = op;
  n.a = a;
  n.b = binary ? b : -1;
  n.c0 = c0;
  n.c1 = c1;
  n.k = k;
  evaluate(n);
  nodes_.push_back(n);
  return sz;
}

void Tape::evaluate(Node& n) const {
  const double x = n.a >= 0 ? nodes_[n.a].value : 0.0;
  const double y = n.b >= 0 ? nodes_[n.b].value : 0.0;
  switch (n.op) {
    case Op::Const:
    case Op::Param:
      return;
    case Op::Add:
      n.value = x + y;
      n.da = 1.0;
      n.db = 1.0;
      return;
    case Op::Sub:
      n.value = x - y;
      n.da = 1.0;
      n.db = -1.0;
      return;
    case Op::Mul:
      n.value = x * y;
      n.da = y;
      n.db = x;
      return;
    case Op::Div:
      n.value = x / y;
      n.da = 1.0 / y;
      n.db = -n.value / y;
      return;
    case Op::Neg:
      n.value = -x;
      n.da = -1.0;
      return;
    case Op::Affine:
      n.value = n.c0 * x + n.c1;
      n.da = n.c0;
      return;
    case Op::PowInt:
      n.value = pow_int(x, n.k);
      n.da = n.k >= 1 ? n.k * pow_int(x, n.k - 1) : 0.0;
      return;
    case Op::ReluPow:
      n.value = relu_pow(x, n.c0, n.k);
      n.da = n.k >= 1 ? n.k * relu_pow(x, n.c0, n.k - 1) : 0.0;
      return;
    case Op::Sin:
      n.value = std::sin(x);
      n.da = std::cos(x);
      return;
    case Op::Cos:
      n.value = std::cos(x);
      n.da = -std::sin(x);
      return;
    case Op::Tanh:
      n.value = std::tanh(x);
      n.da = 1.0 - n.value * n.value;
      return;
    case Op::Sigmoid:
      n.value = sigmoid(x);
      n.da = n.value * (1.0 - n.value);
      return;
    case Op::Exp:
      n.value = std::exp(x);
      n.da = n.value;
      return;
    case Op::Abs:
      n.value = std::abs(x);
      n.da = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      return;
    case Op::Max0:
      n.value = x > 0.0 ? x : 0.0;
      n.da = x > 0.0 ? 1.0 : 0.0;
      return;
  }
}

std::vector<double> Tape::adjoints(int output) const {
  if (output < 0 || output >= static_cast<int>(nodes_.size())) {
    throw std::out_of_range("Tape::backward: output node is not on this tape");
  }
  std::vector<double> adj(static_cast<std::size_t>(output) + 1, 0.0);
  adj[output] = 1.0;
  for (int i = output; i >= 0; --i) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const Node& n = nodes_[i];
    if (n.a >= 0) adj[n.a] += g * n.da;
    if (n.b >= 0) adj[n.b] += g * n.db;
  }
  adj.resize(nodes_.size(), 0.0);
  return adj;
}

std::vector<double> Tape::backward(int output) const {
  const auto adj = adjoints(output);
  std::vector<double> grad(params_.size());
  for (std::size_t p = 0; p < params_.size(); ++p) grad[p] = adj[params_[p]];
  return grad;
}

void Tape::replay(std::span<const double> param_values) {
  if (param_values.size() != params_.size()) throw std::invalid_argument("Tape::replay: parameter count mismatch");
  for (std::size_t p = 0; p < params_.size(); ++p) nodes_[params_[p]].value = param_values[p];
  for (auto& n : nodes_) evaluate(n);
}

void Tape::clear() {
  nodes_.clear();
  params_.clear();
}

Var make_param(Tape& t, double v) { return {&t, t.parameter(v)}; }
Var make_const(Tape& t, double v) { return {&t, t.constant(v)}; }

}  // namespace mlkan::ad
