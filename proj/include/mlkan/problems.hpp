#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mlkan/linalg.hpp"
#include "mlkan/model.hpp"
#include "mlkan/multilevel.hpp"
#include "mlkan/optim.hpp"

namespace mlkan::problems {

inline constexpr double kPi = 3.14159265358979323846;

/// Counterclockwise rotation of (x, y) by theta.
std::array<double, 2> rotate(double x, double y, double theta);

/// ||pred - ref||_2 / ||ref||_2. Throws on shape mismatch or zero reference.
double relative_l2_error(std::span<const double> pred, std::span<const double> ref);

/// Sampled fields for output: value, PDE residual and reference (NaN where
/// unavailable) on a tensor grid. Rows follow the second coordinate (y or t).
struct FieldGrid {
  std::vector<double> x;
  std::vector<double> y;
  linalg::DenseMatrix value;
  linalg::DenseMatrix residual;
  linalg::DenseMatrix reference;
};

/// A training problem with named loss parts and output grids.
class Problem : public multilevel::Objective {
 public:
  virtual std::string name() const = 0;
  /// Raw network inputs expected (before any augmentation).
  virtual int inputs() const = 0;
  virtual FieldGrid fields(const model::Network& net, int nx, int ny) const = 0;
  /// Domain box of the inputs: lo[k], hi[k].
  virtual std::vector<double> lower() const = 0;
  virtual std::vector<double> upper() const = 0;
};

// ----- regression -----

struct RegressionConfig {
  double theta = 0.175;
  int samples = 20000;
  double lo = 0.0001;
  double hi = 0.9999;
  std::uint64_t seed = 1234;
};

/// f(x, y) = cos(4 pi x) + sin(pi y) + sin(2 pi y) + |sin(3 pi y^2)|, unrotated.
double regression_raw(double x, double y);

class RegressionProblem : public Problem {
 public:
  explicit RegressionProblem(const RegressionConfig& cfg = {});

  std::string name() const override { return "regression"; }
  int inputs() const override { return 2; }
  std::vector<double> lower() const override { return {cfg_.lo, cfg_.lo}; }
  std::vector<double> upper() const override { return {cfg_.hi, cfg_.hi}; }

  /// Rotated target with the dataset's affine normalization applied.
  double target(double x, double y) const;
  const std::vector<std::array<double, 2>>& points() const { return x_; }
  const std::vector<double>& values() const { return y_; }
  double raw_min() const { return fmin_; }
  double raw_max() const { return fmax_; }

  /// Mean squared error over the dataset (reported as part v).
  multilevel::LossParts evaluate(const model::Network& net, std::span<double> grad) override;
  double metric(const model::Network& net) override;
  FieldGrid fields(const model::Network& net, int nx, int ny) const override;

 private:
  RegressionConfig cfg_;
  std::vector<std::array<double, 2>> x_;
  std::vector<double> y_;
  double fmin_ = 0.0, fmax_ = 1.0;
};

// ----- 2d Poisson with an interface at x = 0 -----

struct PoissonConfig {
  double eps_l = 1.0;
  double eps_r = 0.5;
  int volume_side = 49;     // |V| = side^2 interior points
  int boundary_points = 200;
  int interface_points = 49;
  double gamma_v = 1e-2;
  double gamma_b = 1.0;
  double gamma_i = 1e-1;
  double offset = 1e-6;     // one-sided interface evaluation
  double rba_mu = 1e-4;
  bool use_rba = true;
  bool mean_reduction = false;  // sums as in the loss definition; means when set
};

/// Manufactured solution: sin(pi x) sin(3 pi y) for x < 0, sin(2 pi x) sin(3 pi y) for x >= 0.
double poisson_exact(double x, double y);
/// Forcing div(eps grad u*).
double poisson_forcing(double x, double y, const PoissonConfig& cfg = {});

/// Point evaluation used by the Poisson loss: value, u_x, u_xx, u_y, u_yy.
struct PoissonJet {
  double u, ux, uxx, uy, uyy;
};

class PoissonProblem : public Problem {
 public:
  explicit PoissonProblem(const PoissonConfig& cfg = {});

  std::string name() const override { return "poisson"; }
  int inputs() const override { return 2; }
  std::vector<double> lower() const override { return {-1.0, -1.0}; }
  std::vector<double> upper() const override { return {1.0, 1.0}; }

  const std::vector<std::array<double, 2>>& volume() const { return v_; }
  const std::vector<std::array<double, 2>>& boundary() const { return b_; }
  const std::vector<double>& interface_y() const { return iy_; }
  const std::vector<double>& rba() const { return rba_.lambda; }
  const PoissonConfig& config() const { return cfg_; }

  multilevel::LossParts evaluate(const model::Network& net, std::span<double> grad) override;
  /// Same loss for an arbitrary point function (no gradient); oracle use.
  template <class F>
  multilevel::LossParts evaluate_function(F&& jet) const;
  /// Relative l2 error against u* on the volume points.
  double metric(const model::Network& net) override;
  void after_step(const model::Network& net) override;
  FieldGrid fields(const model::Network& net, int nx, int ny) const override;

 private:
  double reduce(double sum, std::size_t count) const { return cfg_.mean_reduction ? sum / count : sum; }

  PoissonConfig cfg_;
  std::vector<std::array<double, 2>> v_, b_;
  std::vector<double> iy_;
  optim::RbaWeights rba_;
  std::vector<double> last_residual_;
};

// ----- 1d viscous Burgers on [-1, 1] x [0, 1] -----

struct BurgersConfig {
  double nu = 1e-2;
  int nx = 64;
  int nt = 64;
  int ic_points = 64;
  double gamma_v = 1.0;
  double gamma_b = 1.0;
};

double burgers_initial(double x);  // -sin(pi x)

class BurgersProblem : public Problem {
 public:
  explicit BurgersProblem(const BurgersConfig& cfg = {});

  std::string name() const override { return "burgers"; }
  int inputs() const override { return 2; }
  std::vector<double> lower() const override { return {-1.0, 0.0}; }
  std::vector<double> upper() const override { return {1.0, 1.0}; }

  const std::vector<std::array<double, 2>>& volume() const { return v_; }
  const std::vector<double>& initial_x() const { return ic_; }

  multilevel::LossParts evaluate(const model::Network& net, std::span<double> grad) override;
  FieldGrid fields(const model::Network& net, int nx, int ny) const override;

 private:
  BurgersConfig cfg_;
  std::vector<std::array<double, 2>> v_;
  std::vector<double> ic_;
};

// ----- Allen-Cahn on [-1, 1] x [0, 1] -----

struct AllenCahnConfig {
  double eps = 1e-4;
  /// Residual u_t + diffusion_sign * eps * u_xx + 5 u^3 - 5 u; -1 is the
  /// forward-diffusive form.
  double diffusion_sign = -1.0;
  int collocation = 20000;
  bool grid = false;        // use a grid_side x grid_side grid instead of random points
  int grid_side = 501;
  int ic_points = 501;
  double gamma_v = 1e-1;
  double gamma_b = 1.0;
  double rba_mu = 1e-4;
  bool use_rba = true;
  std::uint64_t seed = 1234;
};

double allen_cahn_initial(double x);  // x^2 cos(pi x)

class AllenCahnProblem : public Problem {
 public:
  explicit AllenCahnProblem(const AllenCahnConfig& cfg = {});

  std::string name() const override { return "allen-cahn"; }
  int inputs() const override { return 2; }
  std::vector<double> lower() const override { return {-1.0, 0.0}; }
  std::vector<double> upper() const override { return {1.0, 1.0}; }

  const std::vector<std::array<double, 2>>& volume() const { return v_; }
  const std::vector<double>& initial_x() const { return ic_; }
  const std::vector<double>& rba() const { return rba_.lambda; }

  multilevel::LossParts evaluate(const model::Network& net, std::span<double> grad) override;
  void after_step(const model::Network& net) override;
  FieldGrid fields(const model::Network& net, int nx, int ny) const override;

 private:
  AllenCahnConfig cfg_;
  std::vector<std::array<double, 2>> v_;
  std::vector<double> ic_;
  optim::RbaWeights rba_;
  std::vector<double> last_residual_;
};

/// Equally spaced points lo .. hi inclusive.
std::vector<double> linspace(double lo, double hi, int count);

// ----- template definitions -----

template <class F>
multilevel::LossParts PoissonProblem::evaluate_function(F&& jet) const {
  double lv = 0.0, lb = 0.0, li = 0.0;
  for (std::size_t k = 0; k < v_.size(); ++k) {
    const auto [x, y] = v_[k];
    const PoissonJet j = jet(x, y);
    const double eps = x < 0.0 ? cfg_.eps_l : cfg_.eps_r;
    const double r = eps * (j.uxx + j.uyy) - poisson_forcing(x, y, cfg_);
    lv += rba_.lambda[k] * r * r;
  }
  for (const auto& p : b_) {
    const double u = jet(p[0], p[1]).u;
    lb += u * u;
  }
  for (double y : iy_) {
    const double jump = cfg_.eps_l * jet(-cfg_.offset, y).ux - cfg_.eps_r * jet(cfg_.offset, y).ux;
    li += jump * jump;
  }
  multilevel::LossParts out;
  out.v = reduce(lv, v_.size());
  out.b = reduce(lb, b_.size());
  out.i = reduce(li, iy_.size());
  out.total = cfg_.gamma_v * out.v + cfg_.gamma_b * out.b + cfg_.gamma_i * out.i;
  return out;
}

}  // namespace mlkan::problems
