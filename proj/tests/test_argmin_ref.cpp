#include <random>

#include "doctest.h"
#include "optlayer/argmin_ref.hpp"

using namespace optlayer;

namespace {

// f(x,y) = 1/2 y'Hy - x c'y with minimizer y*(x) = x H^-1 c.
SmoothBivariateObjective linear_map_objective(const Mat& H, const Vec& c) {
  SmoothBivariateObjective obj;
  obj.eval = [H, c](double x, const Vec& y) {
    return 0.5 * y.dot(H * y) - x * c.dot(y);
  };
  obj.grad_y = [H, c](double x, const Vec& y) { return (H * y - x * c).eval(); };
  obj.hess_yy = [H](double, const Vec&) { return H; };
  obj.cross_xy = [c](double, const Vec&) { return (-c).eval(); };
  return obj;
}

}  // namespace

TEST_CASE("shift-invariant quadratic has unit argmin derivative") {
  SmoothBivariateObjective obj;  // f = 1/2 (y - x)^2
  obj.grad_y = [](double x, const Vec& y) { return Vec::Constant(1, y[0] - x); };
  obj.hess_yy = [](double, const Vec&) { return Mat::Identity(1, 1); };
  obj.cross_xy = [](double, const Vec&) { return Vec::Constant(1, -1.0); };
  Vec g = grad_unconstrained(obj, 0.7, Vec::Constant(1, 0.7));
  CHECK(g[0] == doctest::Approx(1.0));
}

TEST_CASE("linear solution map differentiates to H^-1 c") {
  Mat H = Mat(((Vec(2) << 1, 2).finished()).asDiagonal());
  Vec c = Vec::Ones(2);
  auto obj = linear_map_objective(H, c);
  double x = 1.3;
  Vec y_star = x * H.inverse() * c;
  Vec g = grad_unconstrained(obj, x, y_star);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(0.5));
}

TEST_CASE("quartic objective matches the finite-difference oracle") {
  // f = 1/4 (y - x)^4 + 1/2 y^2
  SmoothBivariateObjective obj;
  obj.grad_y = [](double x, const Vec& y) {
    return Vec::Constant(1, std::pow(y[0] - x, 3) + y[0]);
  };
  obj.hess_yy = [](double x, const Vec& y) {
    return Mat::Constant(1, 1, 3 * std::pow(y[0] - x, 2) + 1);
  };
  obj.cross_xy = [](double x, const Vec& y) {
    return Vec::Constant(1, -3 * std::pow(y[0] - x, 2));
  };
  auto minimize_at = [&](double x) {
    return newton_minimize(
        [&](const Vec& y) { return obj.grad_y(x, y); },
        [&](const Vec& y) { return obj.hess_yy(x, y); }, Vec::Zero(1));
  };
  double x = 2.0;
  Vec g = grad_unconstrained(obj, x, minimize_at(x));
  Mat fd = finite_diff_jacobian(
      [&](const Vec& th) { return minimize_at(th[0]); }, Vec::Constant(1, x),
      1e-5);
  CHECK(g[0] == doctest::Approx(fd(0, 0)).epsilon(1e-5));
}

TEST_CASE("projection onto a sum constraint: both equality formulas") {
  // min 1/2 ||y - x e1||^2  s.t. y1 + y2 = 1
  Mat H = Mat::Identity(2, 2);
  SmoothBivariateObjective obj;
  obj.grad_y = [](double x, const Vec& y) {
    Vec g = y;
    g[0] -= x;
    return g;
  };
  obj.hess_yy = [H](double, const Vec&) { return H; };
  obj.cross_xy = [](double, const Vec&) {
    return (Vec(2) << -1, 0).finished();
  };
  Mat A(1, 2);
  A << 1, 1;
  Mat F(2, 1);
  F << 1 / std::sqrt(2.0), -1 / std::sqrt(2.0);
  double x = 0.6;
  Vec y_star(2);
  y_star << (1 + x) / 2, (1 - x) / 2;

  Vec g_null = grad_equality_nullspace(obj, x, y_star, A, F);
  CHECK(g_null[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(g_null[1] == doctest::Approx(-0.5).epsilon(1e-10));

  Vec g_full = grad_equality_fullrank(obj, x, y_star, A);
  CHECK((g_null - g_full).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("square invertible constraints pin the solution") {
  Mat H = Mat::Identity(2, 2);
  auto obj = linear_map_objective(H, Vec::Ones(2));
  Mat A = Mat::Identity(2, 2);
  Mat F(2, 0);  // empty null space
  Vec g = grad_equality_nullspace(obj, 0.0, Vec::Zero(2), A, F);
  CHECK(g.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("with no constraints the full-rank formula reduces to the unconstrained one") {
  Mat H = Mat(((Vec(3) << 1, 2, 3).finished()).asDiagonal());
  auto obj = linear_map_objective(H, Vec::Ones(3));
  Vec y_star = H.inverse() * Vec::Ones(3);
  Mat A(0, 3);
  Vec g_full = grad_equality_fullrank(obj, 1.0, y_star, A);
  Vec g_unc = grad_unconstrained(obj, 1.0, y_star);
  CHECK((g_full - g_unc).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("the two equality formulas agree on seeded random quadratics") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto randm = [&](Eigen::Index r, Eigen::Index c) {
    Mat M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) M(i, j) = gauss(rng);
    return M;
  };
  for (int t = 0; t < 50; ++t) {
    const int n = 5, m = 2;
    Mat B = randm(n, n);
    Mat H = B.transpose() * B + 0.5 * Mat::Identity(n, n);
    Vec c = randm(n, 1);
    Mat A = randm(m, n);
    Vec b = randm(m, 1);
    auto obj = linear_map_objective(H, c);
    double x = gauss(rng);

    // KKT solve for the constrained minimizer of 1/2 y'Hy - x c'y, Ay = b
    Mat K = Mat::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = H;
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
    Vec rhs(n + m);
    rhs.head(n) = x * c;
    rhs.tail(m) = b;
    Vec y_star = K.lu().solve(rhs).head(n);

    // null-space basis from full pivoting
    Eigen::FullPivLU<Mat> lu(A);
    Mat F = lu.kernel();
    Vec g5 = grad_equality_nullspace(obj, x, y_star, A, F);
    Vec g6 = grad_equality_fullrank(obj, x, y_star, A);
    CHECK((g5 - g6).lpNorm<Eigen::Infinity>() < 1e-10);

    Mat fd = finite_diff_jacobian(
        [&](const Vec& th) {
          Vec r2 = rhs;
          r2.head(n) = th[0] * c;
          return (K.lu().solve(r2).head(n)).eval();
        },
        Vec::Constant(1, x), 1e-5);
    CHECK((g6 - fd.col(0)).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

namespace {

// min 1/2 (y - x)^2  s.t.  y <= 0, smoothed with barrier weight t.
BarrierConstraint nonpositivity() {
  BarrierConstraint c;
  c.eval = [](double, const Vec& y) { return y[0]; };
  c.grad_x = [](double, const Vec&) { return 0.0; };
  c.grad_y = [](double, const Vec&) { return Vec::Ones(1); };
  c.hess_yy = [](double, const Vec&) { return Mat::Zero(1, 1); };
  c.cross_xy = [](double, const Vec&) { return Vec::Zero(1); };
  return c;
}

double clamp_barrier_grad(double x, double t) {
  SmoothBivariateObjective obj;
  obj.grad_y = [](double x_, const Vec& y) {
    return Vec::Constant(1, y[0] - x_);
  };
  obj.hess_yy = [](double, const Vec&) { return Mat::Identity(1, 1); };
  obj.cross_xy = [](double, const Vec&) { return Vec::Constant(1, -1.0); };
  BarrierSpec spec;
  spec.constraints.push_back(nonpositivity());
  spec.t = t;
  // smoothed minimizer solves t(y - x) - 1/y = 0 on y < 0, i.e. the
  // negative root of t y^2 - t x y - 1 = 0
  double y = (t * x - std::sqrt(t * t * x * x + 4.0 * t)) / (2.0 * t);
  return grad_barrier(obj, spec, x, Vec::Constant(1, y))[0];
}

}  // namespace

TEST_CASE("barrier argmin derivative approaches the clamp gradient") {
  CHECK(clamp_barrier_grad(-1.0, 1e4) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(clamp_barrier_grad(1.0, 1e4) == doctest::Approx(0.0).epsilon(1e-3));
  // error shrinks monotonically with the barrier weight
  double prev = 1.0;
  for (double t : {1e2, 1e3, 1e4}) {
    double err = std::abs(clamp_barrier_grad(-1.0, t) - 1.0);
    CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("barrier evaluation rejects boundary points") {
  SmoothBivariateObjective obj;
  obj.grad_y = [](double x, const Vec& y) { return Vec::Constant(1, y[0] - x); };
  obj.hess_yy = [](double, const Vec&) { return Mat::Identity(1, 1); };
  obj.cross_xy = [](double, const Vec&) { return Vec::Constant(1, -1.0); };
  BarrierSpec spec;
  spec.constraints.push_back(nonpositivity());
  spec.t = 10.0;
  CHECK_THROWS_AS(grad_barrier(obj, spec, 0.0, Vec::Zero(1)), BoundaryPoint);
}

TEST_CASE("finite differences recover linear maps, constants, and squares") {
  Mat M(2, 3);
  M << 1, -2, 0.5, 3, 4, -1;
  Mat J = finite_diff_jacobian([&](const Vec& th) { return (M * th).eval(); },
                               Vec::Ones(3), 1e-5);
  CHECK((J - M).cwiseAbs().maxCoeff() < 1e-8);

  Mat Z = finite_diff_jacobian([](const Vec&) { return Vec::Ones(2); },
                               Vec::Ones(3), 1e-5);
  CHECK(Z.cwiseAbs().maxCoeff() == 0.0);

  Mat D = finite_diff_jacobian(
      [](const Vec& th) { return Vec::Constant(1, th[0] * th[0]); },
      Vec::Constant(1, 3.0), 1e-5);
  CHECK(D(0, 0) == doctest::Approx(6.0).epsilon(1e-9));
}
