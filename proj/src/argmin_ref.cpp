#include "optlayer/argmin_ref.hpp"

namespace optlayer {

namespace {

Vec solve_checked(const Mat& H, const Vec& rhs, const char* what) {
  Eigen::FullPivLU<Mat> lu(H);
  if (!lu.isInvertible()) throw SingularHessian(what);
  return lu.solve(rhs);
}

}  // namespace

Vec grad_unconstrained(const SmoothBivariateObjective& obj, double x,
                       const Vec& y_star) {
  if (obj.grad_y(x, y_star).lpNorm<Eigen::Infinity>() > 1e-6)
    throw NotAtMinimizer("grad_y is not ~0 at the queried point");
  return -solve_checked(obj.hess_yy(x, y_star), obj.cross_xy(x, y_star),
                        "f_YY singular");
}

Vec grad_equality_nullspace(const SmoothBivariateObjective& obj, double x,
                            const Vec& y_star, const Mat& A, const Mat& F) {
  if (F.cols() == 0) return Vec::Zero(y_star.size());
  if ((A * F).lpNorm<Eigen::Infinity>() > 1e-10)
    throw NullspaceMismatch("columns of F do not annihilate A");
  Mat H = obj.hess_yy(x, y_star);
  Mat reduced = F.transpose() * H * F;
  Vec rhs = F.transpose() * obj.cross_xy(x, y_star);
  return -F * solve_checked(reduced, rhs, "reduced Hessian singular");
}

Vec grad_equality_fullrank(const SmoothBivariateObjective& obj, double x,
                           const Vec& y_star, const Mat& A) {
  Mat H = obj.hess_yy(x, y_star);
  Vec fxy = obj.cross_xy(x, y_star);
  Eigen::FullPivLU<Mat> hlu(H);
  if (!hlu.isInvertible()) throw SingularHessian("f_YY singular");
  if (A.rows() == 0) return -hlu.solve(fxy);
  Eigen::FullPivLU<Mat> alu(Mat(A * hlu.solve(Mat(A.transpose()))));
  if (!alu.isInvertible()) throw OptlayerError("A H^-1 A' singular (rank?)");
  Vec hinv_fxy = hlu.solve(fxy);
  return hlu.solve(A.transpose() * alu.solve(A * hinv_fxy)) - hinv_fxy;
}

Vec grad_barrier(const SmoothBivariateObjective& obj, const BarrierSpec& bar,
                 double x, const Vec& y_star_t) {
  const Eigen::Index n = y_star_t.size();
  // phi(x,y) = sum_i log(-f_i(x,y)); the minimized barrier objective is
  // t*f0 - phi, whose derivatives are assembled below.
  Mat phi_yy = Mat::Zero(n, n);
  Vec phi_xy = Vec::Zero(n);
  for (const auto& c : bar.constraints) {
    double fi = c.eval(x, y_star_t);
    if (fi >= -1e-12) throw BoundaryPoint("constraint not strictly interior");
    Vec gi = c.grad_y(x, y_star_t);
    double fxi = c.grad_x(x, y_star_t);
    // grad_y phi = sum f_{i,y}/f_i
    phi_yy += c.hess_yy(x, y_star_t) / fi - gi * gi.transpose() / (fi * fi);
    phi_xy += c.cross_xy(x, y_star_t) / fi - gi * (fxi / (fi * fi));
  }
  Mat full = bar.t * obj.hess_yy(x, y_star_t) - phi_yy;
  Vec rhs = bar.t * obj.cross_xy(x, y_star_t) - phi_xy;
  return -solve_checked(full, rhs, "barrier Hessian singular");
}

Mat finite_diff_jacobian(const std::function<Vec(const Vec&)>& fn,
                         const Vec& theta, double step) {
  Vec f0 = fn(theta);
  Mat J(f0.size(), theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vec plus = theta, minus = theta;
    plus[i] += step;
    minus[i] -= step;
    J.col(i) = (fn(plus) - fn(minus)) / (2 * step);
  }
  return J;
}

Vec newton_minimize(const std::function<Vec(const Vec&)>& grad,
                    const std::function<Mat(const Vec&)>& hess, Vec y,
                    double gtol, int max_iter) {
  for (int it = 0; it < max_iter; ++it) {
    Vec g = grad(y);
    if (g.lpNorm<Eigen::Infinity>() <= gtol) return y;
    Mat H = hess(y);
    H.diagonal().array() += 1e-12;
    Vec step = H.ldlt().solve(g);
    double alpha = 1.0;
    double g0 = g.squaredNorm();
    while (alpha > 1e-12 &&
           grad(y - alpha * step).squaredNorm() > g0 * (1 - 1e-4 * alpha))
      alpha *= 0.5;
    y -= alpha * step;
  }
  return y;
}

}  // namespace optlayer
