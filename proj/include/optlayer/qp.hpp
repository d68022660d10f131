#pragma once

#include <memory>
#include <vector>

#include "optlayer/types.hpp"

namespace optlayer {

// Convex QP:  min 1/2 z'Pz + q'z + r   s.t.  Az = b,  Gz <= h.
struct QpProblem {
  Mat P;
  Vec q;
  double r = 0.0;
  Mat A;  // n_eq x n
  Vec b;
  Mat G;  // n_ineq x n
  Vec h;

  Eigen::Index n() const { return q.size(); }
  Eigen::Index n_eq() const { return A.rows(); }
  Eigen::Index n_ineq() const { return G.rows(); }

  static QpProblem unconstrained(Mat P, Vec q, double r = 0.0);

  double objective(const Vec& z) const {
    return 0.5 * z.dot(P * z) + q.dot(z) + r;
  }
};

struct NotPsd : OptlayerError {
  using OptlayerError::OptlayerError;
};
struct RankDeficientEquality : OptlayerError {
  using OptlayerError::OptlayerError;
};

// Certifies the QpProblem invariants: P symmetrized and PSD, A full row rank,
// consistent dimensions. Construction goes through validate_problem().
class ValidatedProblem {
 public:
  const QpProblem& problem() const { return p_; }
  Eigen::Index n() const { return p_.n(); }
  Eigen::Index n_eq() const { return p_.n_eq(); }
  Eigen::Index n_ineq() const { return p_.n_ineq(); }

 private:
  friend ValidatedProblem validate_problem(const QpProblem& p);
  explicit ValidatedProblem(QpProblem p) : p_(std::move(p)) {}
  QpProblem p_;
};

ValidatedProblem validate_problem(const QpProblem& p);

struct SolverConfig {
  double tol = 1e-8;
  int max_iter = 50;
  double kkt_reg = 1e-9;
};

enum class SolveStatus { Optimal, MaxIterations, NumericalFailure, Infeasible };

const char* to_string(SolveStatus s);

// Cached dense factorization of the final interior-point KKT matrix,
// kept on the solution for reuse by the backward pass.
struct KktFactor {
  Eigen::PartialPivLU<Mat> lu;
  Vec slack;   // slack values s at the factorization point
  Vec lambda;  // duals at the factorization point
};

struct QpSolution {
  Vec z_star;
  Vec nu_star;
  Vec lambda_star;
  Vec slack;  // h - G z*
  SolveStatus status = SolveStatus::NumericalFailure;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  std::shared_ptr<const KktFactor> kkt_factor;
};

QpSolution solve_qp(const ValidatedProblem& p, const SolverConfig& cfg = {});

// Elementwise identical to a sequential solve_qp loop; elements may be solved
// concurrently (OPTLAYER_THREADS caps the worker count).
std::vector<QpSolution> solve_batch(const std::vector<ValidatedProblem>& ps,
                                    const SolverConfig& cfg = {});

struct ResidualReport {
  double stationarity = 0.0;
  double primal_eq = 0.0;
  double primal_ineq = 0.0;  // max(0, Gz-h) in inf-norm
  double comp_slack = 0.0;
  double max() const;
};

ResidualReport kkt_residuals(const ValidatedProblem& p, const QpSolution& s);

}  // namespace optlayer
