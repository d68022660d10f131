#pragma once

#include <functional>

#include "optlayer/types.hpp"

namespace optlayer {

// Linear operator given only through matvec and transpose-matvec.
struct LinearOperator {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::function<Vec(const Vec&)> apply;    // A x
  std::function<Vec(const Vec&)> applyT;   // A' y
};

struct LsqrResult {
  Vec x;
  int iterations = 0;
  bool converged = false;
  double residual_norm = 0.0;  // ||A'(Ax-b)|| at exit (least-squares residual)
};

// Paige-Saunders LSQR on min ||Ax - b||_2.
LsqrResult lsqr_solve(const LinearOperator& op, const Vec& rhs,
                      double tol = 1e-10, int max_iter = -1);

}  // namespace optlayer
