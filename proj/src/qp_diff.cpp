#include "optlayer/qp_diff.hpp"

namespace optlayer {

namespace {

// Differential-KKT matrix, unknown order (d_z, d_lambda, d_nu).
Mat diff_kkt_matrix(const QpProblem& p, const QpSolution& s, double reg) {
  const Eigen::Index n = p.n(), me = p.n_eq(), mi = p.n_ineq();
  Mat M = Mat::Zero(n + mi + me, n + mi + me);
  M.topLeftCorner(n, n) = p.P;
  if (mi > 0) {
    M.block(0, n, n, mi) =
        p.G.transpose() * s.lambda_star.asDiagonal();
    M.block(n, 0, mi, n) = p.G;
    M.block(n, n, mi, mi).diagonal() = -s.slack;  // diag(Gz* - h)
  }
  if (me > 0) {
    M.block(0, n + mi, n, me) = p.A.transpose();
    M.block(n + mi, 0, me, n) = p.A;
  }
  if (reg > 0) {
    M.topLeftCorner(n, n).diagonal().array() += reg;
    M.bottomRightCorner(mi + me, mi + me).diagonal().array() -= reg;
  }
  return M;
}

}  // namespace

DiffTriple backward_solve(const ValidatedProblem& vp, const QpSolution& s,
                          const BackwardSeeds& seeds, double kkt_reg) {
  const QpProblem& p = vp.problem();
  const Eigen::Index n = p.n(), me = p.n_eq(), mi = p.n_ineq();
  if (s.status != SolveStatus::Optimal)
    throw NumericalError("backward_solve requires an Optimal solution");
  if (!s.kkt_factor) throw NoFactorCache("solution carries no KKT factor");
  if (seeds.dl_dz.size() != n)
    throw DimensionMismatch("seed dimension does not match problem");

  DiffTriple out;
  bool degenerate = false;
  for (Eigen::Index i = 0; i < mi; ++i) {
    // An epsilon-accurate interior-point solution of a degenerate program
    // leaves both the dual and the slack near sqrt(lambda_i * s_i), so the
    // detection threshold has to track the achieved complementarity rather
    // than being purely absolute.
    double prod = std::max(0.0, s.lambda_star[i] * s.slack[i]);
    double tol_d = std::max(kDegenerateTol, 30.0 * std::sqrt(prod));
    if (s.lambda_star[i] <= tol_d && s.slack[i] <= tol_d) degenerate = true;
  }
  out.heuristic = degenerate;

  // The IPM's final factorization has a -diag(s/lam) inequality block, which
  // never structurally matches the differential KKT matrix, so we
  // refactorize here.
  double reg = degenerate ? std::max(kkt_reg, 1e-8) : kkt_reg;
  Vec rhs = Vec::Zero(n + mi + me);
  rhs.head(n) = -seeds.dl_dz;

  Vec d;
  for (int attempt = 0; attempt < 3; ++attempt) {
    Mat M = diff_kkt_matrix(p, s, reg);
    d = Eigen::PartialPivLU<Mat>(M).solve(rhs);
    if (d.allFinite() && (M * d - rhs).lpNorm<Eigen::Infinity>() <=
                             1e-6 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()))
      break;
    reg = std::max(reg * 100, 1e-8);
    out.heuristic = true;
  }
  if (!d.allFinite())
    throw NumericalError("differential KKT solve failed");

  out.d_z = d.head(n);
  out.d_lambda = d.segment(n, mi);
  out.d_nu = d.tail(me);
  return out;
}

ParamGrads assemble_grads(const QpSolution& s, const DiffTriple& d,
                          const ValidatedProblem& vp) {
  const Eigen::Index n = vp.n(), me = vp.n_eq(), mi = vp.n_ineq();
  if (d.d_z.size() != n || d.d_nu.size() != me || d.d_lambda.size() != mi ||
      s.z_star.size() != n)
    throw DimensionMismatch("assemble_grads: inconsistent dimensions");
  ParamGrads g;
  g.gP = 0.5 * (d.d_z * s.z_star.transpose() +
                s.z_star * d.d_z.transpose());
  g.gq = d.d_z;
  g.gA = d.d_nu * s.z_star.transpose() + s.nu_star * d.d_z.transpose();
  g.gb = -d.d_nu;
  g.gG = s.lambda_star.asDiagonal() * d.d_lambda * s.z_star.transpose() +
         s.lambda_star * d.d_z.transpose();
  g.gh = -(s.lambda_star.array() * d.d_lambda.array()).matrix();
  return g;
}

double GradReport::max() const {
  return std::max({err_P, err_q, err_A, err_b, err_G, err_h});
}

namespace {

// Relative error with an absolute floor: blocks whose true gradient is zero
// (inactive constraints) otherwise divide FD noise by itself.
double rel_err(const Mat& analytic, const Mat& fd) {
  double denom = std::max(1.0, fd.cwiseAbs().maxCoeff());
  return (analytic - fd).cwiseAbs().maxCoeff() / denom;
}

}  // namespace

GradReport gradcheck(const ValidatedProblem& vp, const BackwardSeeds& seeds,
                     double fd_step, const SolverConfig& cfg_in) {
  const QpProblem& p = vp.problem();
  // Gradient errors track solver accuracy; a 1e-8 solve leaves ~1e-4 noise
  // in nearly-active multipliers, so tighten for the comparison.
  SolverConfig cfg = cfg_in;
  cfg.tol = std::min(cfg.tol, 1e-11);
  QpSolution s = solve_qp(vp, cfg);
  if (s.status != SolveStatus::Optimal)
    throw NumericalError("gradcheck: base solve failed");
  DiffTriple d = backward_solve(vp, s, seeds, cfg.kkt_reg);
  ParamGrads g = assemble_grads(s, d, vp);

  auto loss_at = [&](const QpProblem& q) {
    QpSolution sol = solve_qp(validate_problem(q), cfg);
    if (sol.status != SolveStatus::Optimal)
      throw NumericalError("gradcheck: solve failed at perturbation");
    return seeds.dl_dz.dot(sol.z_star);
  };
  auto fd_block = [&](auto&& access, Eigen::Index rows, Eigen::Index cols) {
    Mat fd(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        QpProblem plus = p, minus = p;
        access(plus)(i, j) += fd_step;
        access(minus)(i, j) -= fd_step;
        fd(i, j) = (loss_at(plus) - loss_at(minus)) / (2 * fd_step);
      }
    return fd;
  };

  GradReport rep;
  rep.degenerate = d.heuristic;
  rep.err_P = rel_err(
      g.gP, fd_block([](QpProblem& q) -> Mat& { return q.P; }, p.n(), p.n()));
  rep.err_q = rel_err(
      g.gq, fd_block([](QpProblem& q) -> Vec& { return q.q; }, p.n(), 1));
  if (p.n_eq() > 0) {
    rep.err_A = rel_err(g.gA, fd_block([](QpProblem& q) -> Mat& { return q.A; },
                                       p.n_eq(), p.n()));
    rep.err_b = rel_err(g.gb, fd_block([](QpProblem& q) -> Vec& { return q.b; },
                                       p.n_eq(), 1));
  }
  if (p.n_ineq() > 0) {
    rep.err_G = rel_err(g.gG, fd_block([](QpProblem& q) -> Mat& { return q.G; },
                                       p.n_ineq(), p.n()));
    rep.err_h = rel_err(g.gh, fd_block([](QpProblem& q) -> Vec& { return q.h; },
                                       p.n_ineq(), 1));
  }
  return rep;
}

}  // namespace optlayer
