#include "optlayer/qp.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cstdlib>
#include <thread>

namespace optlayer {

QpProblem QpProblem::unconstrained(Mat P, Vec q, double r) {
  QpProblem p;
  const Eigen::Index n = q.size();
  p.P = std::move(P);
  p.q = std::move(q);
  p.r = r;
  p.A.resize(0, n);
  p.b.resize(0);
  p.G.resize(0, n);
  p.h.resize(0);
  return p;
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::MaxIterations: return "MaxIterations";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
    case SolveStatus::Infeasible: return "Infeasible";
  }
  return "?";
}

ValidatedProblem validate_problem(const QpProblem& p_in) {
  QpProblem p = p_in;
  const Eigen::Index n = p.q.size();
  if (n < 1) throw DimensionMismatch("n must be >= 1");
  if (p.P.rows() != n || p.P.cols() != n)
    throw DimensionMismatch("P must be n x n");
  if (p.A.rows() == 0) p.A.resize(0, n);  // accept default 0x0 blocks
  if (p.G.rows() == 0) p.G.resize(0, n);
  if (p.b.size() == 0) p.b.resize(0);
  if (p.h.size() == 0) p.h.resize(0);
  if (p.A.cols() != n || p.A.rows() != p.b.size())
    throw DimensionMismatch("A/b dimensions inconsistent");
  if (p.G.cols() != n || p.G.rows() != p.h.size())
    throw DimensionMismatch("G/h dimensions inconsistent");

  p.P = 0.5 * (p.P + p.P.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Mat> es(p.P, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, p.P.cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-9 * scale)
    throw NotPsd("P has eigenvalue below -1e-9*|P|");

  if (p.A.rows() > 0) {
    Eigen::ColPivHouseholderQR<Mat> qr(p.A.transpose());
    qr.setThreshold(1e-10);
    if (qr.rank() < p.A.rows())
      throw RankDeficientEquality("A is row-rank deficient");
  }
  return ValidatedProblem(std::move(p));
}

double ResidualReport::max() const {
  return std::max({stationarity, primal_eq, primal_ineq, comp_slack});
}

ResidualReport kkt_residuals(const ValidatedProblem& vp, const QpSolution& s) {
  const QpProblem& p = vp.problem();
  if (s.z_star.size() != p.n() || s.nu_star.size() != p.n_eq() ||
      s.lambda_star.size() != p.n_ineq())
    throw DimensionMismatch("solution dimensions do not match problem");
  ResidualReport r;
  Vec stat = p.P * s.z_star + p.q;
  if (p.n_eq() > 0) stat += p.A.transpose() * s.nu_star;
  if (p.n_ineq() > 0) stat += p.G.transpose() * s.lambda_star;
  r.stationarity = stat.lpNorm<Eigen::Infinity>();
  if (p.n_eq() > 0)
    r.primal_eq = (p.A * s.z_star - p.b).lpNorm<Eigen::Infinity>();
  if (p.n_ineq() > 0) {
    Vec viol = (p.G * s.z_star - p.h).cwiseMax(0.0);
    r.primal_ineq = viol.lpNorm<Eigen::Infinity>();
    Vec slack = p.h - p.G * s.z_star;
    r.comp_slack =
        (s.lambda_star.array() * slack.array()).abs().maxCoeff();
  }
  return r;
}

namespace {

// Solve the equality-only KKT system [P A'; A 0][z; nu] = [-q; b].
// A singular system (e.g. P singular with q outside range) is reported as
// NumericalFailure via the residual check.
QpSolution solve_equality_qp(const QpProblem& p, const SolverConfig& cfg) {
  const Eigen::Index n = p.n(), me = p.n_eq();
  Mat K = Mat::Zero(n + me, n + me);
  K.topLeftCorner(n, n) = p.P;
  if (cfg.kkt_reg > 0)
    K.topLeftCorner(n, n).diagonal().array() += cfg.kkt_reg;
  if (me > 0) {
    K.topRightCorner(n, me) = p.A.transpose();
    K.bottomLeftCorner(me, n) = p.A;
    K.bottomRightCorner(me, me).diagonal().array() -= cfg.kkt_reg;
  }
  Vec rhs(n + me);
  rhs.head(n) = -p.q;
  rhs.tail(me) = p.b;

  QpSolution sol;
  sol.lambda_star.resize(0);
  sol.slack.resize(0);
  auto factor = std::make_shared<KktFactor>();
  factor->lu = Eigen::PartialPivLU<Mat>(K);
  Vec x = factor->lu.solve(rhs);
  sol.kkt_factor = factor;
  sol.z_star = x.head(n);
  sol.nu_star = x.tail(me);
  sol.iterations = 1;

  const double scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
  double res = (K * x - rhs).lpNorm<Eigen::Infinity>();
  if (!x.allFinite() || res > 1e-6 * scale) {
    sol.status = SolveStatus::NumericalFailure;
    return sol;
  }
  ResidualReport rep;
  Vec stat = p.P * sol.z_star + p.q;
  if (me > 0) stat += p.A.transpose() * sol.nu_star;
  sol.dual_residual = stat.lpNorm<Eigen::Infinity>();
  sol.primal_residual =
      me > 0 ? (p.A * sol.z_star - p.b).lpNorm<Eigen::Infinity>() : 0.0;
  sol.gap = 0.0;
  sol.status = (sol.dual_residual <= std::max(cfg.tol, 1e-7 * scale) &&
                sol.primal_residual <= std::max(cfg.tol, 1e-7 * scale))
                   ? SolveStatus::Optimal
                   : SolveStatus::NumericalFailure;
  return sol;
}

}  // namespace

QpSolution solve_qp(const ValidatedProblem& vp, const SolverConfig& cfg) {
  const QpProblem& p = vp.problem();
  const Eigen::Index n = p.n(), me = p.n_eq(), mi = p.n_ineq();

  if (mi == 0) return solve_equality_qp(p, cfg);

  const Eigen::Index dim = n + me + mi;
  Mat K = Mat::Zero(dim, dim);
  K.topLeftCorner(n, n) = p.P;
  K.topLeftCorner(n, n).diagonal().array() += cfg.kkt_reg;
  if (me > 0) {
    K.block(0, n, n, me) = p.A.transpose();
    K.block(n, 0, me, n) = p.A;
    K.block(n, n, me, me).diagonal().array() = -cfg.kkt_reg;
  }
  K.block(0, n + me, n, mi) = p.G.transpose();
  K.block(n + me, 0, mi, n) = p.G;

  // Initialization: KKT solve with unit inequality scaling, then clamp.
  QpSolution sol;
  Vec z, nu, lam, s;
  {
    K.bottomRightCorner(mi, mi).diagonal().array() = -1.0;
    Vec rhs(dim);
    rhs.head(n) = -p.q;
    rhs.segment(n, me) = p.b;
    rhs.tail(mi) = p.h;
    Eigen::PartialPivLU<Mat> lu(K);
    Vec x = lu.solve(rhs);
    if (!x.allFinite()) {
      sol.status = SolveStatus::NumericalFailure;
      sol.z_star = Vec::Zero(n);
      sol.nu_star = Vec::Zero(me);
      sol.lambda_star = Vec::Zero(mi);
      sol.slack = Vec::Zero(mi);
      return sol;
    }
    z = x.head(n);
    nu = x.segment(n, me);
    lam = x.tail(mi).cwiseMax(1.0);
    s = (p.h - p.G * z).cwiseMax(1.0);
  }

  const double data_scale = std::max(
      {1.0, p.q.lpNorm<Eigen::Infinity>(),
       me > 0 ? p.b.lpNorm<Eigen::Infinity>() : 0.0,
       p.h.lpNorm<Eigen::Infinity>()});

  auto factor = std::make_shared<KktFactor>();
  double prev_primal = std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int it = 1; it <= cfg.max_iter; ++it) {
    Vec rd = p.P * z + p.q + p.G.transpose() * lam;
    if (me > 0) rd += p.A.transpose() * nu;
    Vec rp = me > 0 ? Vec(p.A * z - p.b) : Vec();
    Vec rc = p.G * z + s - p.h;
    const double mu = s.dot(lam) / static_cast<double>(mi);

    sol.dual_residual = rd.lpNorm<Eigen::Infinity>();
    sol.primal_residual = rc.lpNorm<Eigen::Infinity>();
    if (me > 0)
      sol.primal_residual =
          std::max(sol.primal_residual, rp.lpNorm<Eigen::Infinity>());
    sol.gap = mu;
    sol.iterations = it - 1;

    if (sol.dual_residual <= cfg.tol && sol.primal_residual <= cfg.tol &&
        mu <= cfg.tol) {
      sol.status = SolveStatus::Optimal;
      break;
    }

    // Divergence certificate: primal residual stalls while duals blow up.
    const double dual_norm =
        std::max(lam.lpNorm<Eigen::Infinity>(),
                 me > 0 ? nu.lpNorm<Eigen::Infinity>() : 0.0);
    if (dual_norm > 1e8 * data_scale && sol.primal_residual > cfg.tol) {
      if (sol.primal_residual > 0.5 * prev_primal) ++stall; else stall = 0;
      if (stall >= 3) {
        sol.status = SolveStatus::Infeasible;
        break;
      }
    }
    prev_primal = sol.primal_residual;

    K.bottomRightCorner(mi, mi).diagonal() =
        -(s.array() / lam.array()) - cfg.kkt_reg;
    factor->lu = Eigen::PartialPivLU<Mat>(K);

    Vec rhs(dim);
    rhs.head(n) = -rd;
    if (me > 0) rhs.segment(n, me) = -rp;

    // Affine (predictor) direction: target complementarity -s.*lam.
    rhs.tail(mi) = -rc + s;
    Vec d_aff = factor->lu.solve(rhs);
    if (!d_aff.allFinite()) {
      sol.status = SolveStatus::NumericalFailure;
      break;
    }
    Vec dz_a = d_aff.head(n);
    Vec dlam_a = d_aff.tail(mi);
    Vec ds_a = -rc - p.G * dz_a;

    auto max_step = [](const Vec& v, const Vec& dv) {
      double a = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0) a = std::min(a, -v[i] / dv[i]);
      return a;
    };
    double a_aff = std::min(max_step(s, ds_a), max_step(lam, dlam_a));
    double mu_aff = (s + a_aff * ds_a).dot(lam + a_aff * dlam_a) /
                    static_cast<double>(mi);
    double sigma = std::pow(mu_aff / mu, 3.0);

    // Corrector: add the centering and Mehrotra second-order terms.
    Vec rcomp = (-s.array() * lam.array() + sigma * mu -
                 ds_a.array() * dlam_a.array())
                    .matrix();
    rhs.tail(mi) = -rc - (rcomp.array() / lam.array()).matrix();
    Vec d = factor->lu.solve(rhs);
    if (!d.allFinite()) {
      sol.status = SolveStatus::NumericalFailure;
      break;
    }
    Vec dz = d.head(n);
    Vec dnu = me > 0 ? Vec(d.segment(n, me)) : Vec();
    Vec dlam = d.tail(mi);
    Vec ds = -rc - p.G * dz;

    double alpha =
        0.99 * std::min(max_step(s, ds), max_step(lam, dlam));
    alpha = std::min(alpha, 1.0);

    z += alpha * dz;
    if (me > 0) nu += alpha * dnu;
    lam += alpha * dlam;
    s += alpha * ds;
    sol.iterations = it;
    if (it == cfg.max_iter) sol.status = SolveStatus::MaxIterations;
  }

  if (sol.status == SolveStatus::MaxIterations) {
    // The last step may have crossed the finish line; re-check.
    Vec rd = p.P * z + p.q + p.G.transpose() * lam;
    if (me > 0) rd += p.A.transpose() * nu;
    Vec rc = p.G * z + s - p.h;
    sol.dual_residual = rd.lpNorm<Eigen::Infinity>();
    sol.primal_residual = rc.lpNorm<Eigen::Infinity>();
    if (me > 0)
      sol.primal_residual = std::max(
          sol.primal_residual, (p.A * z - p.b).lpNorm<Eigen::Infinity>());
    sol.gap = s.dot(lam) / static_cast<double>(mi);
    if (sol.dual_residual <= cfg.tol && sol.primal_residual <= cfg.tol &&
        sol.gap <= cfg.tol)
      sol.status = SolveStatus::Optimal;
  }

  sol.z_star = z;
  sol.nu_star = me > 0 ? nu : Vec(Vec::Zero(0));
  sol.lambda_star = lam;
  sol.slack = p.h - p.G * z;
  if (factor->lu.rows() == dim) {
    factor->slack = s;
    factor->lambda = lam;
    sol.kkt_factor = factor;
  }
  return sol;
}

std::vector<QpSolution> solve_batch(const std::vector<ValidatedProblem>& ps,
                                    const SolverConfig& cfg) {
  const size_t count = ps.size();
  std::vector<QpSolution> out(count);
  if (count == 0) return out;
  for (size_t i = 1; i < count; ++i) {
    if (ps[i].n() != ps[0].n() || ps[i].n_eq() != ps[0].n_eq() ||
        ps[i].n_ineq() != ps[0].n_ineq())
      throw DimensionMismatch("batch elements must share dimensions");
  }

  unsigned workers = std::thread::hardware_concurrency();
  if (const char* env = std::getenv("OPTLAYER_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) workers = static_cast<unsigned>(v);
  }
  workers = std::max(1u, std::min<unsigned>(workers, count));

  if (workers == 1) {
    for (size_t i = 0; i < count; ++i) out[i] = solve_qp(ps[i], cfg);
    return out;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (size_t i = w; i < count; i += workers)
        out[i] = solve_qp(ps[i], cfg);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace optlayer
