#include "optlayer/cone_diff.hpp"

namespace optlayer {

Mat embed_skew(const ConeLpProblem& p) {
  const Eigen::Index n = p.n(), m = p.m();
  Mat Q = Mat::Zero(n + m + 1, n + m + 1);
  Q.block(0, n, n, m) = p.A.transpose();
  Q.block(n, 0, m, n) = -p.A;
  Q.block(0, n + m, n, 1) = p.c;
  Q.block(n, n + m, m, 1) = p.b;
  Q.block(n + m, 0, 1, n) = -p.c.transpose();
  Q.block(n + m, n, 1, m) = -p.b.transpose();
  return Q;
}

EmbeddingPoint solution_to_embedding(const ConeSolution& sol, double tol) {
  for (Eigen::Index i = 0; i < sol.s.size(); ++i)
    if (sol.s[i] > tol && sol.y[i] > tol)
      throw ComplementarityViolation(
          "s and y both positive at coordinate " + std::to_string(i));
  EmbeddingPoint pt;
  pt.z.resize(sol.x.size() + sol.y.size() + 1);
  pt.z << sol.x, sol.y - sol.s, 1.0;
  pt.w = 1.0;
  return pt;
}

ConeSolution embedding_to_solution(const EmbeddingPoint& pt, Eigen::Index n,
                                   Eigen::Index m) {
  ConeSolution sol;
  sol.x = pt.z.head(n);
  Vec v = pt.z.segment(n, m);
  sol.y = v.cwiseMax(0.0);
  sol.s = sol.y - v;
  return sol;
}

ConeDataDelta make_delta(Eigen::Index m, Eigen::Index n) {
  return ConeDataDelta{Mat::Zero(m, n), Vec::Zero(m), Vec::Zero(n)};
}

namespace {

struct EmbeddingContext {
  Mat Q;
  Vec z;      // (x, y-s, 1)
  Vec pi;     // Pi(z) = (x, y, 1)
  Vec mask;   // diagonal of DPi(z), entries in {0, 1}
  Eigen::Index n, m;
};

EmbeddingContext make_context(const ConeLpProblem& p, const ConeSolution& sol,
                              double degeneracy_tol) {
  EmbeddingContext ctx;
  ctx.n = p.n();
  ctx.m = p.m();
  ctx.Q = embed_skew(p);
  ctx.z = solution_to_embedding(sol).z;
  const Eigen::Index dim = ctx.n + ctx.m + 1;
  ctx.mask = Vec::Ones(dim);
  for (Eigen::Index i = 0; i < ctx.m; ++i) {
    double vi = ctx.z[ctx.n + i];
    if (std::abs(vi) <= degeneracy_tol)
      throw DegenerateProjection(
          "orthant projection nondifferentiable at coordinate " +
          std::to_string(i));
    ctx.mask[ctx.n + i] = vi > 0 ? 1.0 : 0.0;
  }
  ctx.pi = ctx.z;
  ctx.pi.segment(ctx.n, ctx.m) =
      ctx.z.segment(ctx.n, ctx.m).cwiseMax(0.0);
  return ctx;
}

// M = (Q - I) DPi(z) + I, applied matrix-free (w = 1).
LinearOperator make_M(const EmbeddingContext& ctx, bool transpose) {
  LinearOperator op;
  const Eigen::Index dim = ctx.Q.rows();
  op.rows = op.cols = dim;
  const Mat& Q = ctx.Q;
  const Vec& mask = ctx.mask;
  if (!transpose) {
    op.apply = [&Q, &mask](const Vec& v) -> Vec {
      Vec t = mask.cwiseProduct(v);
      return Q * t - t + v;
    };
    op.applyT = [&Q, &mask](const Vec& v) -> Vec {
      Vec t = Q.transpose() * v - v;
      return mask.cwiseProduct(t) + v;
    };
  } else {
    op.apply = [&Q, &mask](const Vec& v) -> Vec {
      Vec t = Q.transpose() * v - v;
      return mask.cwiseProduct(t) + v;
    };
    op.applyT = [&Q, &mask](const Vec& v) -> Vec {
      Vec t = mask.cwiseProduct(v);
      return Q * t - t + v;
    };
  }
  return op;
}

Vec lsqr_or_throw(const LinearOperator& op, const Vec& rhs,
                  const ConeDiffConfig& cfg) {
  int max_iter = cfg.lsqr_max_iter > 0
                     ? cfg.lsqr_max_iter
                     : static_cast<int>(10 * op.rows);
  LsqrResult r = lsqr_solve(op, rhs, cfg.lsqr_tol, max_iter);
  if (!r.converged)
    throw LsqrNoConvergence("LSQR did not converge in " +
                            std::to_string(max_iter) + " iterations");
  return r.x;
}

Mat delta_skew(const ConeDataDelta& dp) {
  ConeLpProblem d{dp.dA, dp.db, dp.dc};
  return embed_skew(d);
}

}  // namespace

ConeForwardDelta derivative_forward(const ConeLpProblem& p,
                                    const ConeSolution& sol,
                                    const ConeDataDelta& dp,
                                    const ConeDiffConfig& cfg) {
  EmbeddingContext ctx = make_context(p, sol, cfg.degeneracy_tol);
  Vec g = delta_skew(dp) * ctx.pi;
  Vec dz = lsqr_or_throw(make_M(ctx, false), Vec(-g), cfg);

  const Eigen::Index n = ctx.n, m = ctx.m;
  Vec du = dz.head(n);
  Vec dv = dz.segment(n, m);
  double dtau = dz[n + m];
  Vec piv = ctx.pi.segment(n, m);  // = y
  Vec maskv = ctx.mask.segment(n, m);

  ConeForwardDelta out;
  out.dx = du - sol.x * dtau;
  out.dy = maskv.cwiseProduct(dv) - sol.y * dtau;
  out.ds = maskv.cwiseProduct(dv) - dv - sol.s * dtau;
  return out;
}

ConeDataDelta derivative_adjoint(const ConeLpProblem& p,
                                 const ConeSolution& sol, const Vec& dl_dx,
                                 const Vec& dl_dy, const Vec& dl_ds,
                                 const ConeDiffConfig& cfg) {
  EmbeddingContext ctx = make_context(p, sol, cfg.degeneracy_tol);
  const Eigen::Index n = ctx.n, m = ctx.m;
  Vec maskv = ctx.mask.segment(n, m);

  // Seed through the transpose of Dphi(z).
  Vec seed(n + m + 1);
  seed.head(n) = dl_dx;
  seed.segment(n, m) = maskv.cwiseProduct(dl_dy) +
                       maskv.cwiseProduct(dl_ds) - dl_ds;
  seed[n + m] = -sol.x.dot(dl_dx) - sol.y.dot(dl_dy) - sol.s.dot(dl_ds);

  Vec r = lsqr_or_throw(make_M(ctx, true), Vec(-seed), cfg);

  Vec ru = r.head(n);
  Vec rv = r.segment(n, m);
  double rtau = r[n + m];
  Vec piu = ctx.pi.head(n);          // = x
  Vec piv = ctx.pi.segment(n, m);    // = y

  // Gradients read off the dQ-adjoint in the skew block layout.
  ConeDataDelta g = make_delta(m, n);
  g.dA = piv * ru.transpose() - rv * piu.transpose();
  g.db = rv - rtau * piv;
  g.dc = ru - rtau * piu;
  return g;
}

}  // namespace optlayer
