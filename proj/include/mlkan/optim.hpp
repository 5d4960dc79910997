#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mlkan/model.hpp"

namespace mlkan::optim {

/// Throws std::runtime_error naming `where` and the first bad index.
void check_finite(std::span<const double> v, const char* where);

/// params -= lr * grad
void sgd_step(std::span<double> params, std::span<const double> grad, double lr);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg = {});
  /// Decay params by (1 - lr * weight_decay), then apply the bias-corrected step.
  void step(std::span<double> params, std::span<const double> grad, double lr);
  void reset();
  std::size_t steps() const noexcept { return t_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }
  /// 1 / (sqrt(v_hat) + eps) from the latest step; identity before the first.
  std::vector<double> diagonal() const;

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct LbfgsConfig {
  double lr = 1.0;
  std::size_t history = 10;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_ls = 25;
  double curvature_eps = 1e-10;
  double fallback_lr = 1e-3;
  double tolerance_grad = 1e-7;
  double tolerance_change = 1e-9;
};

/// Returns the loss at x and writes the gradient into g.
using LossGrad = std::function<double(std::span<const double> x, std::span<double> g)>;

struct LbfgsIter {
  double loss = 0.0;     // loss after the iteration
  int evals = 0;         // callback evaluations spent
  bool fallback = false; // line search failed, gradient step taken
  bool converged = false;
};

class Lbfgs {
 public:
  Lbfgs(std::size_t n, LbfgsConfig cfg = {});
  /// One quasi-Newton iteration from x (updated in place).
  LbfgsIter iterate(std::vector<double>& x, const LossGrad& f);
  /// Up to `max_iter` iterations, stopping early on the gradient/change
  /// tolerances. Returns the per-iteration records.
  std::vector<LbfgsIter> run(std::vector<double>& x, const LossGrad& f, int max_iter = 20);
  void reset();
  std::size_t history_size() const noexcept { return s_.size(); }
  /// Direction the next iterate() would take for gradient g.
  std::vector<double> direction(std::span<const double> g) const;

 private:
  LbfgsConfig cfg_;
  std::size_t n_;
  std::deque<std::vector<double>> s_, y_;
  std::deque<double> rho_;
  bool cached_ = false;
  std::vector<double> x_cache_, g_;
  double loss_ = 0.0;
  std::size_t iters_ = 0;
};

enum class Space { U, W };

/// One of the eight rows of the preconditioned update table: the inner
/// product (geometry), which gradient is paired with D, and where the
/// iterate lives.
struct UpdateRule {
  Space geometry = Space::U;
  Space gradient = Space::U;
  Space iterate = Space::U;
};

std::string to_string(const UpdateRule& r);

/// Applies the update to `params` (in rule.iterate's basis). `grad` is the
/// gradient with respect to those same parameters. `diag` is the optimizer
/// diagonal D (empty means identity).
void apply_update_rule(const UpdateRule& rule, std::span<double> params, std::span<const double> grad, double lr,
                   const model::GlobalCob& cob, std::span<const double> diag = {});

struct RbaWeights {
  std::vector<double> lambda;
  double mu = 1e-4;
};

/// lambda_i = (1 - mu) lambda_i + mu e_i / max_j e_j. All-zero residuals
/// leave the weights unchanged.
void rba_update(RbaWeights& w, std::span<const double> residuals);

struct LrSchedule {
  enum class Kind { Constant, LinearRamp, ExpCyclic };
  Kind kind = Kind::Constant;
  double lr = 1e-3;
  double lr0 = 1e-4;     // ramp start
  int ramp_steps = 10;
  int cycle = 100;
  double gamma = 0.9995;
};

LrSchedule::Kind parse_schedule_kind(const std::string& s);
std::string to_string(LrSchedule::Kind k);

/// Ramp: lr0 -> lr linearly over ramp_steps. Cyclic:
/// lr * gamma^step * (1 - 0.9 * (step mod cycle) / cycle).
double lr_at(const LrSchedule& s, long step);

}  // namespace mlkan::optim
