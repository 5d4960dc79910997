#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "mlkan/basis.hpp"

using namespace mlkan::basis;

namespace {

KnotVector random_knots(int n, int r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> gap(0.3, 1.7);
  std::vector<double> t(static_cast<std::size_t>(n + 2 * r - 1));
  double acc = -1.0;
  for (auto& v : t) {
    v = acc;
    acc += gap(rng) / n;
  }
  return KnotVector(r, t);
}

}  // namespace

TEST_CASE("uniform knots") {
  auto k = make_uniform_knots(0.0, 1.0, 2, 2);
  REQUIRE_EQ(k.values().size(), 5u);
  std::vector<double> want{-0.5, 0.0, 0.5, 1.0, 1.5};
  for (int i = 0; i < 5; ++i) CHECK(k.values()[i] == doctest::Approx(want[i]).epsilon(1e-15));
  CHECK_EQ(k.dim(), 3);
  CHECK(k.spacing() == doctest::Approx(0.5));

  auto k1 = make_uniform_knots(0.0, 1.0, 1, 1);
  CHECK_EQ(k1.values(), std::vector<double>{0.0, 1.0});
  CHECK_EQ(k1.dim(), 1);

  auto k4 = make_uniform_knots(-1.0, 1.0, 4, 4);
  REQUIRE_EQ(k4.values().size(), 11u);
  for (int i = 0; i < 11; ++i) CHECK(k4.values()[i] == doctest::Approx(-2.5 + 0.5 * i));

  CHECK_THROWS_AS(make_uniform_knots(1.0, 1.0, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(make_uniform_knots(0.0, 1.0, 0, 2), std::invalid_argument);
  CHECK_THROWS_AS(KnotVector(2, {0.0, 0.5, 0.5, 1.0, 1.5}), std::invalid_argument);
}

TEST_CASE("bspline values") {
  auto k1 = make_uniform_knots(0.0, 1.0, 4, 1);
  CHECK_EQ(eval_bspline(k1, 1, 0.3), 1.0);
  CHECK_EQ(eval_bspline(k1, 1, 0.25), 1.0);
  CHECK_EQ(eval_bspline(k1, 1, 0.5), 0.0);
  CHECK_EQ(eval_bspline(k1, 3, 1.0), 1.0);
  CHECK_EQ(eval_bspline(k1, 2, 0.1), 0.0);

  auto k2 = make_uniform_knots(0.0, 1.0, 5, 2);
  for (int i = 0; i <= 3; ++i) CHECK(eval_bspline(k2, i, k2[i + 1]) == doctest::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(eval_bspline(k2, 5, 0.5), std::out_of_range);
  CHECK_THROWS_AS(eval_bspline(k2, -2, 0.5), std::out_of_range);
}

TEST_CASE("partition of unity") {
  std::mt19937_64 rng(42);
  for (int r = 1; r <= 4; ++r) {
    for (bool uniform : {true, false}) {
      auto k = uniform ? make_uniform_knots(-1.0, 1.0, 7, r) : random_knots(7, r, rng);
      for (int s = 0; s < 100; ++s) {
        const double x = s == 99 ? k.upper() : k.lower() + (k.upper() - k.lower()) * s / 99.0;
        double sum = 0.0;
        for (int i = k.first_index(); i < k.intervals(); ++i) sum += eval_bspline(k, i, x);
        CHECK(std::abs(sum - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("relu power values") {
  auto k2 = KnotVector(2, {0.0, 0.5, 1.0, 1.5});
  CHECK(eval_relu_power(k2, 0, 1.0) == doctest::Approx(0.5));
  for (int r = 1; r <= 4; ++r) {
    auto k = make_uniform_knots(0.0, 1.0, 3, r);
    CHECK_EQ(eval_relu_power(k, 1, k[1] - 0.01), 0.0);
  }
  auto k4 = make_uniform_knots(0.0, 1.0, 4, 4);
  CHECK(eval_relu_power(k4, 0, 0.3) == doctest::Approx(0.027).epsilon(1e-14));
  CHECK_THROWS_AS(eval_relu_power(k4, 4, 0.3), std::out_of_range);
}

TEST_CASE("relu power recursion") {
  // (x - a) max(x - b, 0)^r = max(x - b, 0)^(r+1) + (b - a) max(x - b, 0)^r
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = u(rng), b = u(rng), x = u(rng);
    for (int r = 1; r <= 3; ++r) {
      const double p = std::max(x - b, 0.0);
      const double lhs = (x - a) * std::pow(p, r);
      const double rhs = std::pow(p, r + 1) + (b - a) * std::pow(p, r);
      CHECK(std::abs(lhs - rhs) < 1e-12);
    }
  }
}

TEST_CASE("cob r=1") {
  auto k = make_uniform_knots(0.0, 1.0, 5, 1);
  auto a = build_cob(k).matrix;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const double want = (i == j) ? 1.0 : (j == i + 1 ? -1.0 : 0.0);
      CHECK_EQ(a.at(i, j), want);
    }
}

TEST_CASE("cob r=2 rows") {
  auto k = make_uniform_knots(0.0, 2.0, 4, 2);
  auto a = build_cob(k).matrix;
  CHECK(a.at(1, 1) == doctest::Approx(2.0));
  CHECK(a.at(1, 2) == doctest::Approx(-4.0));
  CHECK(a.at(1, 3) == doctest::Approx(2.0));

  // nonuniform row 0 on knots t_{-1}, t_0, t_1, ... with t_{-1}=0, t_0=0.3, t_1=1
  auto kn = KnotVector(2, {0.0, 0.3, 1.0, 1.4, 2.2});
  auto an = build_cob(kn).matrix;
  const double t0 = 0.0, t1 = 0.3, t2 = 1.0;
  CHECK(an.at(0, 0) == doctest::Approx(1.0 / (t1 - t0)));
  CHECK(an.at(0, 1) == doctest::Approx(-(1.0 / (t1 - t0) + 1.0 / (t2 - t1))));
  CHECK(an.at(0, 2) == doctest::Approx(1.0 / (t2 - t1)));
}

TEST_CASE("cob closed form matches recurrence") {
  for (int r = 1; r <= 4; ++r)
    for (int n : {2, 5, 16, 32}) {
      for (double h_scale : {1.0, 0.37}) {
        auto k = make_uniform_knots(0.0, n * h_scale, n, r);
        for (bool scaled : {false, true}) {
          auto rec = build_cob(k, scaled).matrix;
          auto cf = cob_closed_form(k, scaled).matrix;
          for (int i = 0; i < k.dim(); ++i)
            for (int j = 0; j < k.dim(); ++j) {
              const double x = rec.at(i, j), y = cf.at(i, j);
              CHECK(std::abs(x - y) <= 1e-12 * std::max(1.0, std::abs(y)));
            }
        }
      }
    }
}

TEST_CASE("cob toeplitz except final rows") {
  auto k = make_uniform_knots(0.0, 1.0, 10, 3);
  auto a = build_cob(k).matrix;
  for (int i = 0; i + 3 < k.dim(); ++i)
    for (int d = 0; d <= 3; ++d) CHECK(a.band(i, d) == doctest::Approx(a.band(0, d)).epsilon(1e-12));
}

TEST_CASE("basis identity") {
  CHECK(verify_basis_identity(make_uniform_knots(0.0, 1.0, 4, 1)) < 1e-14);
  CHECK(verify_basis_identity(make_uniform_knots(0.0, 1.0, 8, 3)) < 1e-10);
  std::mt19937_64 rng(17);
  CHECK(verify_basis_identity(random_knots(5, 4, rng)) < 1e-9);
}

TEST_CASE("basis identity sweep") {
  std::mt19937_64 rng(2024);
  for (int r = 1; r <= 4; ++r)
    for (int n = 2; n <= 32; ++n) {
      CHECK(verify_basis_identity(make_uniform_knots(-1.0, 1.0, n, r)) < 1e-9);
      CHECK(verify_basis_identity(random_knots(n, r, rng)) < 1e-9);
    }
}

TEST_CASE("spline smoothness across knots") {
  for (int r = 3; r <= 4; ++r) {
    auto k = make_uniform_knots(0.0, 1.0, 8, r);
    const double h = k.spacing();
    const double d = 1e-3 * h;
    for (int i = k.first_index(); i < k.intervals(); ++i) {
      for (int j = std::max(i + 1, 1); j < std::min(i + r, k.intervals()); ++j) {
        const double t = k[j];
        auto f = [&](double x) { return eval_bspline(k, i, x); };
        const double left = (f(t) - f(t - d)) / d;
        const double right = (f(t + d) - f(t)) / d;
        CHECK(std::abs(left - right) < 10.0 * d / (h * h));
      }
    }
  }
}
