#pragma once

#include "optlayer/lsqr.hpp"
#include "optlayer/types.hpp"

namespace optlayer {

// LP cone program over the nonnegative orthant:
//   min c'x  s.t.  Ax + s = b,  s >= 0   (dual cone = primal cone).
struct ConeLpProblem {
  Mat A;  // m x n
  Vec b;
  Vec c;
  Eigen::Index n() const { return c.size(); }
  Eigen::Index m() const { return b.size(); }
};

struct ConeSolution {
  Vec x;
  Vec y;
  Vec s;
};

struct EmbeddingPoint {
  Vec z;  // (u, v, tau) in R^{n+m+1}
  double w = 1.0;
};

struct ConeDataDelta {
  Mat dA;
  Vec db;
  Vec dc;
};

struct ComplementarityViolation : OptlayerError {
  using OptlayerError::OptlayerError;
};
struct DegenerateProjection : OptlayerError {
  using OptlayerError::OptlayerError;
};
struct LsqrNoConvergence : OptlayerError {
  using OptlayerError::OptlayerError;
};

// Q = [[0, A', c], [-A, 0, b], [-c', -b', 0]]; exactly skew-symmetric.
Mat embed_skew(const ConeLpProblem& p);

// z = (x, y - s, 1), w = 1; the retriever phi recovers (x, y, s) from z.
EmbeddingPoint solution_to_embedding(const ConeSolution& sol,
                                     double tol = 1e-6);

ConeSolution embedding_to_solution(const EmbeddingPoint& pt, Eigen::Index n,
                                   Eigen::Index m);

struct ConeDiffConfig {
  double lsqr_tol = 1e-10;
  int lsqr_max_iter = -1;  // default 10*(n+m+1)
  double degeneracy_tol = 1e-9;
};

// Forward-mode derivative of the solution map along (dA, db, dc).
ConeDataDelta make_delta(Eigen::Index m, Eigen::Index n);

struct ConeForwardDelta {
  Vec dx;
  Vec dy;
  Vec ds;
};

ConeForwardDelta derivative_forward(const ConeLpProblem& p,
                                    const ConeSolution& sol,
                                    const ConeDataDelta& dp,
                                    const ConeDiffConfig& cfg = {});

// Adjoint: gradients of l w.r.t. (A, b, c) from seeds (dl_dx, dl_dy, dl_ds).
ConeDataDelta derivative_adjoint(const ConeLpProblem& p,
                                 const ConeSolution& sol, const Vec& dl_dx,
                                 const Vec& dl_dy, const Vec& dl_ds,
                                 const ConeDiffConfig& cfg = {});

}  // namespace optlayer
