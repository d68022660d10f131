#pragma once

#include <functional>
#include <vector>

#include "optlayer/types.hpp"

namespace optlayer {

// Twice-differentiable objective f(x, y) with scalar x and vector y,
// supplied with the derivatives its argmin-gradient formulas need.
struct SmoothBivariateObjective {
  std::function<double(double, const Vec&)> eval;
  std::function<Vec(double, const Vec&)> grad_y;
  std::function<Mat(double, const Vec&)> hess_yy;   // f_YY
  std::function<Vec(double, const Vec&)> cross_xy;  // f_XY
};

// One inequality constraint f_i(x, y) <= 0 with the derivatives of the
// induced log-barrier term.
struct BarrierConstraint {
  std::function<double(double, const Vec&)> eval;
  std::function<double(double, const Vec&)> grad_x;
  std::function<Vec(double, const Vec&)> grad_y;
  std::function<Mat(double, const Vec&)> hess_yy;
  std::function<Vec(double, const Vec&)> cross_xy;
};

struct BarrierSpec {
  std::vector<BarrierConstraint> constraints;
  double t = 1.0;
};

struct SingularHessian : OptlayerError {
  using OptlayerError::OptlayerError;
};
struct NotAtMinimizer : OptlayerError {
  using OptlayerError::OptlayerError;
};
struct NullspaceMismatch : OptlayerError {
  using OptlayerError::OptlayerError;
};
struct BoundaryPoint : OptlayerError {
  using OptlayerError::OptlayerError;
};

// dg/dx = -f_YY^-1 f_XY at (x, y*).
Vec grad_unconstrained(const SmoothBivariateObjective& obj, double x,
                       const Vec& y_star);

// dg/dx = -F (F' f_YY F)^-1 F' f_XY, with columns of F spanning null(A).
Vec grad_equality_nullspace(const SmoothBivariateObjective& obj, double x,
                            const Vec& y_star, const Mat& A, const Mat& F);

// dg/dx = (H^-1 A'(A H^-1 A')^-1 A H^-1 - H^-1) f_XY for full-row-rank A.
Vec grad_equality_fullrank(const SmoothBivariateObjective& obj, double x,
                           const Vec& y_star, const Mat& A);

// Barrier approximation: y*_t minimizes t f(x,y) - phi(x,y) with
// phi = sum_i log(-f_i); dg/dx = -(t f_YY - phi_YY)^-1 (t f_XY - phi_XY).
Vec grad_barrier(const SmoothBivariateObjective& obj, const BarrierSpec& bar,
                 double x, const Vec& y_star_t);

// Central finite differences: column i = (fn(th+step e_i)-fn(th-step e_i))/2h.
Mat finite_diff_jacobian(const std::function<Vec(const Vec&)>& fn,
                         const Vec& theta, double step);

// Damped Newton to ||grad|| <= gtol; used to produce minimizers for tests.
Vec newton_minimize(const std::function<Vec(const Vec&)>& grad,
                    const std::function<Mat(const Vec&)>& hess, Vec y0,
                    double gtol = 1e-10, int max_iter = 200);

}  // namespace optlayer
