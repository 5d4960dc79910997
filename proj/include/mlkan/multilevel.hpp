#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mlkan/basis.hpp"
#include "mlkan/linalg.hpp"
#include "mlkan/model.hpp"
#include "mlkan/optim.hpp"

namespace mlkan::multilevel {

enum class ProlongKind { Dyadic, General };

std::string to_string(ProlongKind k);
ProlongKind parse_prolong_kind(const std::string& s);

/// Coarse-to-fine coefficient map: u_fine = P u_coarse, P is fine_dim x coarse_dim.
struct Prolongation {
  basis::KnotVector coarse;
  basis::KnotVector fine;
  linalg::DenseMatrix P;
  ProlongKind kind = ProlongKind::Dyadic;
  double mask_constant = std::numeric_limits<double>::quiet_NaN();

  std::vector<double> apply(std::span<const double> u) const;
};

/// Knots with every interval bisected (the extension spacing halves too).
basis::KnotVector dyadic_refine(const basis::KnotVector& k);

/// Two-scale mask c * binom(r, s) with an explicit constant c.
Prolongation dyadic_prolongation(const basis::KnotVector& coarse, double constant);
/// Same, with the constant that satisfies the nesting identity for this r.
Prolongation dyadic_prolongation(const basis::KnotVector& coarse);
/// The constant used by dyadic_prolongation(coarse): the first of 2^(1-r),
/// 2^(-r) whose mask reproduces every coarse basis function to 1e-10.
double dyadic_mask_constant(int r);

/// P = (A_c S A_f^{-1})^T where S writes each coarse truncated power in the
/// fine ones. Coarse knots inside [a, b] must be fine knots; extension knots
/// left of a are re-expressed through the fine extension powers.
Prolongation general_prolongation(const basis::KnotVector& coarse, const basis::KnotVector& fine);

/// max over coarse basis functions i and sample points x in [a, b] of
/// |b^c_i(x) - sum_j P_ji b^f_j(x)|. Samples: `samples` random points plus
/// every fine knot.
double nesting_error(const Prolongation& p, int samples = 500, std::uint64_t seed = 1);

struct RefineResult {
  model::Network net;
  std::vector<Prolongation> prolongations;  // one per KAN layer
};

/// Bisects every layer's knots and maps the weights slice by slice. ReLU-mode
/// layers are converted to splines, prolonged and converted back.
RefineResult refine_network(const model::Network& net, ProlongKind kind = ProlongKind::Dyadic);

// ----- nested training -----

struct LossParts {
  double total = 0.0;
  double v = std::numeric_limits<double>::quiet_NaN();
  double b = std::numeric_limits<double>::quiet_NaN();
  double i = std::numeric_limits<double>::quiet_NaN();
};

/// A training problem seen by the driver.
class Objective {
 public:
  virtual ~Objective() = default;
  /// Loss at the current parameters; adds d loss / d params into `grad`
  /// unless it is empty.
  virtual LossParts evaluate(const model::Network& net, std::span<double> grad) = 0;
  /// Problem-specific accuracy measure (NaN if none).
  virtual double metric(const model::Network&) { return std::numeric_limits<double>::quiet_NaN(); }
  /// Called once per optimizer step, after the parameter update.
  virtual void after_step(const model::Network&) {}
};

struct OptimizerSpec {
  enum class Kind { Sgd, Adam, Lbfgs };
  Kind kind = Kind::Adam;
  optim::LrSchedule schedule;
  optim::AdamConfig adam;
  optim::LbfgsConfig lbfgs;
  int lbfgs_iters = 20;  // iterations per epoch
  /// First-order optimizers only: scale the scheduled rate by a linear ramp
  /// from lr0 / lr to 1 over this many steps at the start of every level
  /// (0 disables). LinearRamp schedules already restart at each level.
  int level_warmup = 0;
};

OptimizerSpec::Kind parse_optimizer_kind(const std::string& s);
std::string to_string(OptimizerSpec::Kind k);

struct StepRecord {
  long step = 0;   // global, starting at 1
  int level = 0;   // 0 is the coarsest
  LossParts loss;
  double metric = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  double wall_ms = std::numeric_limits<double>::quiet_NaN();
  int evals = 0;
};

struct Transition {
  int from_level = 0;
  long step = 0;
  double before = 0.0;
  double after = 0.0;
  double rel_jump = 0.0;
};

struct TrainOptions {
  std::vector<int> schedule;  // epochs per level, coarse to fine
  OptimizerSpec optimizer;
  ProlongKind prolong = ProlongKind::Dyadic;
  int metric_every = 1;
  bool wallclock = true;
  std::function<void(const StepRecord&)> on_step;
  /// Called with the trained network at the end of every level.
  std::function<void(int, const model::Network&)> on_level_end;
};

struct TrainResult {
  model::Network net;
  std::vector<StepRecord> log;
  std::vector<Transition> transitions;
  std::vector<std::size_t> params_per_level;
  LossParts final_loss;
  double final_metric = std::numeric_limits<double>::quiet_NaN();
  long evaluations = 0;
  bool diverged = false;
  std::string error;
};

/// Trains the coarsest network for schedule[0] epochs, prolongs, trains the
/// next level, and so on. Optimizer state starts fresh on every level since
/// the parameter count changes. A non-finite loss stops training with
/// `diverged` set and the log kept.
TrainResult nested_train(model::Network coarse, Objective& obj, const TrainOptions& opt);

/// Parses "e1,e2,...,eK". Throws on empty entries or negative counts.
std::vector<int> parse_schedule(const std::string& s);

/// Per-sample work of an epoch schedule under the cost model
/// sum over layers of P * Q * (n_level + r), with n doubling per level.
double schedule_work(const model::Network& coarse, const std::vector<int>& schedule);

}  // namespace mlkan::multilevel
