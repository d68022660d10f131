#pragma once

#include <optional>

#include "optlayer/expr.hpp"
#include "optlayer/qp.hpp"
#include "optlayer/qp_diff.hpp"

namespace optlayer {

struct UnsupportedAtom : OptlayerError {
  using OptlayerError::OptlayerError;
};
struct NotVerified : OptlayerError {
  using OptlayerError::OptlayerError;
};
struct UndeclaredParameter : OptlayerError {
  using OptlayerError::OptlayerError;
};

// One coordinate of a sparse affine map: value contributes to entry
// (row, col) of a data block, scaled by theta~[slice] (slice p = the
// constant-offset slot).
struct SparseEntry {
  Eigen::Index row, col, slice;
  double val;
};

// Affine-solver-affine form of a verified DPP problem, canonical target the
// QP standard form. All tensors are computed once; instantiation for new
// theta touches no AST.
struct AsaForm {
  Eigen::Index n_orig = 0;   // flattened original variable dimension
  Eigen::Index n_c = 0;      // canonical variable dimension (orig + aux)
  Eigen::Index m_eq = 0;
  Eigen::Index m_ineq = 0;
  Eigen::Index p = 0;        // flattened parameter dimension

  // Linear cost: q_c[row] = sum val * theta~[slice]  (col unused, kept 0).
  std::vector<SparseEntry> Qmat;
  // Constant objective offset, affine part: r += val * theta~[slice].
  std::vector<SparseEntry> r_lin;
  // [A b]: col in [0, n_c] with col == n_c addressing b. Same layout for
  // [G h].
  std::vector<SparseEntry> R_eq;
  std::vector<SparseEntry> R_ineq;

  // Quadratic objective terms coeff/2 * ||M x + m||^2 * 2, stored as the
  // affine tensor of the argument: arg[row] = sum val * x~[col] * theta~[slice]
  // with col == n_c addressing the constant offset m.
  struct QuadTerm {
    double coeff;          // P += coeff * M'M
    Eigen::Index rows;
    std::vector<SparseEntry> S;
  };
  std::vector<QuadTerm> quad_terms;

  // Original variable i lives at canonical coordinate retriever[i].
  std::vector<Eigen::Index> retriever;
  std::vector<std::pair<std::string, Eigen::Index>> variable_order;

  QpProblem instantiate(const Vec& theta) const;
};

AsaForm canonicalize(const DppProblem& p);

struct SolveRecord {
  Vec theta;
  ValidatedProblem problem;
  QpSolution solution;
};

std::pair<Vec, SolveRecord> asa_forward(const AsaForm& f, const Vec& theta,
                                        const SolverConfig& cfg = {});

struct AsaGrad {
  Vec grad_theta;
  bool heuristic = false;
};

AsaGrad asa_backward(const AsaForm& f, const SolveRecord& rec,
                     const Vec& dl_dx, double kkt_reg = 1e-9);

// Deterministic canonical-form dump used for golden tests and `canon`.
std::string asa_to_json(const AsaForm& f);

}  // namespace optlayer
