#include "optlayer/lsqr.hpp"

#include <cmath>

namespace optlayer {

LsqrResult lsqr_solve(const LinearOperator& op, const Vec& rhs, double tol,
                      int max_iter) {
  if (rhs.size() != op.rows)
    throw DimensionMismatch("lsqr: rhs size does not match operator rows");
  if (max_iter < 0) max_iter = static_cast<int>(2 * (op.rows + op.cols));

  LsqrResult res;
  res.x = Vec::Zero(op.cols);

  double beta = rhs.norm();
  if (beta == 0.0) {
    res.converged = true;
    return res;
  }
  Vec u = rhs / beta;
  Vec v = op.applyT(u);
  double alpha = v.norm();
  if (alpha == 0.0) {
    res.converged = true;
    return res;
  }
  v /= alpha;
  Vec w = v;

  double phibar = beta;
  double rhobar = alpha;
  const double bnorm = beta;
  double anorm = 0.0;

  for (int it = 1; it <= max_iter; ++it) {
    // Golub-Kahan bidiagonalization step.
    u = op.apply(v) - alpha * u;
    beta = u.norm();
    if (beta > 0) u /= beta;
    v = op.applyT(u) - beta * v;
    alpha = v.norm();
    if (alpha > 0) v /= alpha;
    anorm = std::hypot(anorm, std::hypot(alpha, beta));

    // Givens rotation eliminating beta.
    double rho = std::hypot(rhobar, beta);
    double c = rhobar / rho;
    double s = beta / rho;
    double theta = s * alpha;
    rhobar = -c * alpha;
    double phi = c * phibar;
    phibar = s * phibar;

    res.x += (phi / rho) * w;
    w = v - (theta / rho) * w;
    res.iterations = it;

    // ||A'r|| = phibar * |rhobar| estimate; stop when small relative to
    // the problem scale (handles inconsistent systems), or when the
    // residual itself is negligible (consistent systems).
    double arnorm = phibar * std::abs(rhobar);
    res.residual_norm = arnorm;
    if (arnorm <= tol * std::max(1.0, anorm) * std::max(1.0, phibar) ||
        phibar <= tol * bnorm) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace optlayer
