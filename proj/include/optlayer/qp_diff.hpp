#pragma once

#include "optlayer/qp.hpp"

namespace optlayer {

struct BackwardSeeds {
  Vec dl_dz;  // incoming loss gradient w.r.t. z*
};

struct DiffTriple {
  Vec d_z;
  Vec d_lambda;
  Vec d_nu;
  bool heuristic = false;  // set when complementarity was degenerate
};

struct ParamGrads {
  Mat gP;
  Vec gq;
  Mat gA;
  Vec gb;
  Mat gG;
  Vec gh;
};

struct NoFactorCache : OptlayerError {
  using OptlayerError::OptlayerError;
};

// Floor of the threshold below which a constraint with both a tiny dual and
// a tiny slack is treated as degenerate (the effective threshold also tracks
// the achieved complementarity); the solve then proceeds with regularization
// and the result is flagged heuristic.
inline constexpr double kDegenerateTol = 1e-7;

DiffTriple backward_solve(const ValidatedProblem& p, const QpSolution& s,
                          const BackwardSeeds& seeds,
                          double kkt_reg = 1e-9);

ParamGrads assemble_grads(const QpSolution& s, const DiffTriple& d,
                          const ValidatedProblem& p);

struct GradReport {
  double err_P = 0, err_q = 0, err_A = 0, err_b = 0, err_G = 0, err_h = 0;
  bool degenerate = false;
  double max() const;
};

// Compares analytic gradients of l(z*) = seeds.dl_dz . z* against central
// finite differences over every data block.
GradReport gradcheck(const ValidatedProblem& p, const BackwardSeeds& seeds,
                     double fd_step = 1e-5, const SolverConfig& cfg = {});

}  // namespace optlayer
