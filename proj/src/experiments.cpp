#include "optlayer/experiments.hpp"

#include <random>
#include <vector>

#include "json.hpp"
#include "optlayer/qp.hpp"
#include "optlayer/qp_diff.hpp"

namespace optlayer {

namespace {

Mat first_difference(int L) {
  Mat D = Mat::Zero(L - 1, L);
  for (int i = 0; i < L - 1; ++i) {
    D(i, i) = -1.0;
    D(i, i + 1) = 1.0;
  }
  return D;
}

struct Signals {
  std::vector<Vec> clean, noisy;
};

Signals make_signals(const DenoiseConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> level(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Signals s;
  const int L = cfg.signal_len;
  for (int k = 0; k < cfg.num_signals; ++k) {
    Vec clean(L);
    int seg_len = L / cfg.segments;
    for (int seg = 0; seg < cfg.segments; ++seg) {
      double v = level(rng);
      int lo = seg * seg_len;
      int hi = (seg == cfg.segments - 1) ? L : lo + seg_len;
      for (int i = lo; i < hi; ++i) clean[i] = v;
    }
    Vec y = clean;
    for (int i = 0; i < L; ++i) y[i] += cfg.sigma * noise(rng);
    s.clean.push_back(std::move(clean));
    s.noisy.push_back(std::move(y));
  }
  return s;
}

// Denoising QP in variables (z, t): z the smoothed signal, t the
// per-difference slack bounding |D z|.
QpProblem denoise_qp(const Vec& y, double lambda, const Mat& D) {
  const Eigen::Index L = y.size();
  const Eigen::Index m = D.rows();
  QpProblem qp;
  qp.P = Mat::Zero(L + m, L + m);
  qp.P.topLeftCorner(L, L) = Mat::Identity(L, L);
  qp.q = Vec::Zero(L + m);
  qp.q.head(L) = -y;
  qp.q.tail(m).setConstant(lambda);
  qp.r = 0.5 * y.squaredNorm();
  qp.G = Mat::Zero(2 * m, L + m);
  qp.G.block(0, 0, m, L) = D;
  qp.G.block(m, 0, m, L) = -D;
  qp.G.block(0, L, m, m) = -Mat::Identity(m, m);
  qp.G.block(m, L, m, m) = -Mat::Identity(m, m);
  qp.h = Vec::Zero(2 * m);
  return qp;
}

struct DenoiseEval {
  double mse = 0;          // mean over signals of (1/L)||z - clean||^2
  double d_loglambda = 0;  // gradient of mse w.r.t. log(lambda)
  Mat d_D;                 // gradient w.r.t. D entries (learn_d only)
  bool failed = false;
};

DenoiseEval eval_denoise(const std::vector<Vec>& noisy,
                         const std::vector<Vec>& clean, double lambda,
                         const Mat& D, bool want_grad, bool learn_d) {
  DenoiseEval out;
  const Eigen::Index L = noisy[0].size();
  const Eigen::Index m = D.rows();
  if (learn_d) out.d_D = Mat::Zero(m, L);
  for (size_t k = 0; k < noisy.size(); ++k) {
    ValidatedProblem vp = validate_problem(denoise_qp(noisy[k], lambda, D));
    QpSolution s = solve_qp(vp);
    if (s.status != SolveStatus::Optimal) {
      out.failed = true;
      return out;
    }
    Vec z = s.z_star.head(L);
    Vec err = z - clean[k];
    out.mse += err.squaredNorm() / static_cast<double>(L);
    if (!want_grad) continue;
    BackwardSeeds seeds;
    seeds.dl_dz = Vec::Zero(L + m);
    seeds.dl_dz.head(L) = 2.0 * err / static_cast<double>(L);
    DiffTriple d = backward_solve(vp, s, seeds);
    ParamGrads g = assemble_grads(s, d, vp);
    // q tail is lambda * 1, so dl/dlambda = sum of gq over the t block;
    // in log space multiply by lambda.
    out.d_loglambda += lambda * g.gq.tail(m).sum();
    if (learn_d)
      out.d_D += g.gG.block(0, 0, m, L) - g.gG.block(m, 0, m, L);
  }
  double n = static_cast<double>(noisy.size());
  out.mse /= n;
  out.d_loglambda /= n;
  if (learn_d) out.d_D /= n;
  return out;
}

std::pair<Mat, Vec> make_blobs(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 0.4);
  Mat X(n, 2);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    double label = (i % 2 == 0) ? 1.0 : -1.0;
    X(i, 0) = label * 1.0 + noise(rng);
    X(i, 1) = label * 1.0 + noise(rng);
    y[i] = label;
  }
  return {X, y};
}

struct Ridge {
  ValidatedProblem vp;
  QpSolution sol;
};

Ridge fit_ridge(const Mat& X, const Vec& y, double alpha) {
  QpProblem qp;
  const Eigen::Index d = X.cols();
  qp.P = 2.0 * (X.transpose() * X + alpha * Mat::Identity(d, d));
  qp.q = -2.0 * X.transpose() * y;
  qp.r = y.squaredNorm();
  ValidatedProblem vp = validate_problem(qp);
  QpSolution s = solve_qp(vp);
  if (s.status != SolveStatus::Optimal)
    throw NumericalError(std::string("ridge solve failed: ") + to_string(s.status));
  return {std::move(vp), std::move(s)};
}

double test_loss(const Vec& theta, const Mat& Xt, const Vec& yt) {
  return (Xt * theta - yt).squaredNorm() / static_cast<double>(Xt.rows());
}

}  // namespace

DenoiseResult run_denoise(const DenoiseConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  Signals sig = make_signals(cfg, rng);
  int n_train = std::max(1, cfg.num_signals * 8 / 10);
  std::vector<Vec> train_y(sig.noisy.begin(), sig.noisy.begin() + n_train);
  std::vector<Vec> train_c(sig.clean.begin(), sig.clean.begin() + n_train);
  std::vector<Vec> test_y(sig.noisy.begin() + n_train, sig.noisy.end());
  std::vector<Vec> test_c(sig.clean.begin() + n_train, sig.clean.end());

  DenoiseResult r;
  r.lambda_init = cfg.lambda_init;
  r.test_mse_baseline = 0;
  for (size_t k = 0; k < test_y.size(); ++k)
    r.test_mse_baseline += (test_y[k] - test_c[k]).squaredNorm() /
                           static_cast<double>(cfg.signal_len);
  r.test_mse_baseline /= static_cast<double>(test_y.size());

  Mat D = first_difference(cfg.signal_len);
  double loglam = std::log(cfg.lambda_init);
  for (int it = 0; it <= cfg.iterations; ++it) {
    double lam = std::exp(loglam);
    bool last = it == cfg.iterations;
    DenoiseEval tr =
        eval_denoise(train_y, train_c, lam, D, !last, cfg.learn_d);
    if (tr.failed) {
      r.solver_failure = true;
      return r;
    }
    DenoiseEval te = eval_denoise(test_y, test_c, lam, D, false, false);
    if (te.failed) {
      r.solver_failure = true;
      return r;
    }
    if (it == 0) {
      r.train_mse_init = tr.mse;
      r.test_mse_init = te.mse;
    }
    r.train_mse_final = tr.mse;
    r.test_mse_final = te.mse;
    r.lambda_final = lam;
    if (last) break;
    loglam -= cfg.learning_rate * tr.d_loglambda;
    if (cfg.learn_d) D -= 0.1 * cfg.learning_rate * tr.d_D;
  }
  return r;
}

PoisonResult run_poison(const PoisonConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  auto [X, y] = make_blobs(cfg.num_train, rng);
  auto [Xt, yt] = make_blobs(cfg.num_test, rng);

  PoisonResult r;
  Ridge clean = fit_ridge(X, y, cfg.alpha);
  r.clean_test_loss = test_loss(clean.sol.z_star, Xt, yt);

  // Implicit gradient of the test loss w.r.t. the training features.
  const Eigen::Index m = Xt.rows();
  BackwardSeeds seeds;
  seeds.dl_dz =
      2.0 * Xt.transpose() * (Xt * clean.sol.z_star - yt) / double(m);
  DiffTriple d = backward_solve(clean.vp, clean.sol, seeds);
  ParamGrads g = assemble_grads(clean.sol, d, clean.vp);
  // P = 2(X'X + aI), q = -2X'y  =>  gX = 4 X gP - 2 y gq'.
  Mat gX = 4.0 * X * g.gP - 2.0 * y * g.gq.transpose();
  r.grad_norm = gX.norm();

  Mat Xp = X;
  for (Eigen::Index i = 0; i < Xp.rows(); ++i)
    for (Eigen::Index j = 0; j < Xp.cols(); ++j) {
      double s = gX(i, j);
      if (s != 0.0) Xp(i, j) += cfg.epsilon * (s > 0 ? 1.0 : -1.0);
    }

  Ridge poisoned = fit_ridge(Xp, y, cfg.alpha);
  r.poisoned_test_loss = test_loss(poisoned.sol.z_star, Xt, yt);
  return r;
}

// ---- gradient-check suites ----------------------------------------------

QpProblem random_feasible_qp(std::mt19937_64& rng, int n, int n_eq,
                             int n_ineq) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> slack(0.1, 1.0);
  auto randn = [&](Eigen::Index r, Eigen::Index c) {
    Mat M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) M(i, j) = gauss(rng);
    return M;
  };
  QpProblem qp;
  Mat M = randn(n, n);
  qp.P = M.transpose() * M + 0.1 * Mat::Identity(n, n);
  qp.q = randn(n, 1);
  Vec z0 = randn(n, 1);
  if (n_eq > 0) {
    qp.A = randn(n_eq, n);
    qp.b = qp.A * z0;
  }
  if (n_ineq > 0) {
    qp.G = randn(n_ineq, n);
    qp.h = qp.G * z0;
    for (int i = 0; i < n_ineq; ++i) qp.h[i] += slack(rng);
  }
  return qp;
}

ConeLpProblem random_bounded_lp(std::mt19937_64& rng, int m, int n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.2, 1.0);
  ConeLpProblem p;
  p.A = Mat(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) p.A(i, j) = gauss(rng);
  Vec x0(n), s0(m), y0(m);
  for (Eigen::Index j = 0; j < n; ++j) x0[j] = gauss(rng);
  for (Eigen::Index i = 0; i < m; ++i) s0[i] = pos(rng);
  for (Eigen::Index i = 0; i < m; ++i) y0[i] = pos(rng);
  p.b = p.A * x0 + s0;
  p.c = -p.A.transpose() * y0;
  return p;
}

ConeSolution solve_lp(const ConeLpProblem& p) {
  QpProblem qp;
  qp.P = Mat::Zero(p.n(), p.n());
  qp.q = p.c;
  qp.G = p.A;
  qp.h = p.b;
  ValidatedProblem vp = validate_problem(qp);
  QpSolution s = solve_qp(vp);
  if (s.status != SolveStatus::Optimal)
    throw NumericalError(std::string("LP solve failed: ") + to_string(s.status));
  ConeSolution sol;
  sol.x = s.z_star;
  sol.y = s.lambda_star;
  sol.s = p.b - p.A * s.z_star;
  sol.s = sol.s.cwiseMax(0.0);
  return sol;
}

GradcheckSummary gradcheck_qp_suite(std::uint64_t seed, int trials) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dn(2, 8), de(0, 3), di(0, 5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  GradcheckSummary out;
  out.trials = trials;
  for (int t = 0; t < trials; ++t) {
    int n = dn(rng);
    QpProblem qp =
        random_feasible_qp(rng, n, std::min(de(rng), n - 1), di(rng));
    BackwardSeeds seeds;
    seeds.dl_dz = Vec(n);
    for (int i = 0; i < n; ++i) seeds.dl_dz[i] = gauss(rng);
    try {
      ValidatedProblem vp = validate_problem(qp);
      GradReport rep = gradcheck(vp, seeds);
      ++out.solved;
      if (rep.degenerate) {
        ++out.degenerate;
        continue;
      }
      out.max_rel_err = std::max(out.max_rel_err, rep.max());
      if (rep.max() > 1e-4) ++out.failures;
    } catch (const OptlayerError&) {
      ++out.failures;
    }
  }
  return out;
}

ConeCheckSummary gradcheck_cone_suite(std::uint64_t seed, int trials) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dm(2, 5), dn(2, 4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ConeCheckSummary out;
  out.trials = trials;
  for (int t = 0; t < trials; ++t) {
    int m = dm(rng);
    int n = std::min(dn(rng), m);
    ConeLpProblem p = random_bounded_lp(rng, m, n);
    auto randv = [&](Eigen::Index k) {
      Vec v(k);
      for (Eigen::Index i = 0; i < k; ++i) v[i] = gauss(rng);
      return v;
    };
    try {
      ConeSolution sol = solve_lp(p);
      ++out.solved;

      ConeDataDelta dp = make_delta(m, n);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) dp.dA(i, j) = gauss(rng);
      dp.db = randv(m);
      dp.dc = randv(n);
      Vec gx = randv(n), gy = randv(m), gs = randv(m);

      ConeForwardDelta fwd = derivative_forward(p, sol, dp);
      ConeDataDelta adj = derivative_adjoint(p, sol, gx, gy, gs);
      double lhs = gx.dot(fwd.dx) + gy.dot(fwd.dy) + gs.dot(fwd.ds);
      double rhs = (adj.dA.array() * dp.dA.array()).sum() +
                   adj.db.dot(dp.db) + adj.dc.dot(dp.dc);
      double scale = std::max(1.0, std::abs(lhs));
      double id_err = std::abs(lhs - rhs) / scale;
      out.max_adjoint_err = std::max(out.max_adjoint_err, id_err);

      // Directional finite difference of x* along (dA, db, dc).
      const double eps = 1e-6;
      ConeLpProblem pp = p, pm = p;
      pp.A += eps * dp.dA;
      pp.b += eps * dp.db;
      pp.c += eps * dp.dc;
      pm.A -= eps * dp.dA;
      pm.b -= eps * dp.db;
      pm.c -= eps * dp.dc;
      Vec fd = (solve_lp(pp).x - solve_lp(pm).x) / (2 * eps);
      double fd_err = (fd - fwd.dx).lpNorm<Eigen::Infinity>() /
                      std::max(1.0, fd.lpNorm<Eigen::Infinity>());
      out.max_fd_err = std::max(out.max_fd_err, fd_err);
      if (id_err > 1e-8 || fd_err > 1e-4) ++out.failures;
    } catch (const OptlayerError&) {
      // Degenerate draw (solver or projection failure): skip, don't count.
    }
  }
  return out;
}

// ---- JSON plumbing ------------------------------------------------------

namespace {

void check_keys(const nlohmann::json& j,
                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw OptlayerError("unknown config key '" + it.key() + "'");
  }
}

}  // namespace

DenoiseConfig denoise_config_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  check_keys(j, {"seed", "signal_len", "segments", "sigma", "num_signals",
                 "lambda_init", "learning_rate", "iterations", "learn_d"});
  DenoiseConfig c;
  c.seed = j.value("seed", c.seed);
  c.signal_len = j.value("signal_len", c.signal_len);
  c.segments = j.value("segments", c.segments);
  c.sigma = j.value("sigma", c.sigma);
  c.num_signals = j.value("num_signals", c.num_signals);
  c.lambda_init = j.value("lambda_init", c.lambda_init);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.iterations = j.value("iterations", c.iterations);
  c.learn_d = j.value("learn_d", c.learn_d);
  if (c.signal_len < 2 || c.segments < 1 || c.num_signals < 2 ||
      c.iterations < 0 || c.lambda_init <= 0 || c.sigma < 0)
    throw OptlayerError("invalid denoise config");
  return c;
}

PoisonConfig poison_config_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  check_keys(j, {"seed", "num_train", "num_test", "alpha", "epsilon"});
  PoisonConfig c;
  c.seed = j.value("seed", c.seed);
  c.num_train = j.value("num_train", c.num_train);
  c.num_test = j.value("num_test", c.num_test);
  c.alpha = j.value("alpha", c.alpha);
  c.epsilon = j.value("epsilon", c.epsilon);
  if (c.num_train < 2 || c.num_test < 1 || c.alpha <= 0 || c.epsilon < 0 ||
      c.epsilon > 0.1)
    throw OptlayerError("invalid poison config");
  return c;
}

std::string to_json(const GradcheckSummary& r) {
  nlohmann::ordered_json j;
  j["trials"] = r.trials;
  j["solved"] = r.solved;
  j["degenerate"] = r.degenerate;
  j["failures"] = r.failures;
  j["max_rel_err"] = r.max_rel_err;
  return j.dump(2);
}

std::string to_json(const ConeCheckSummary& r) {
  nlohmann::ordered_json j;
  j["trials"] = r.trials;
  j["solved"] = r.solved;
  j["failures"] = r.failures;
  j["max_adjoint_err"] = r.max_adjoint_err;
  j["max_fd_err"] = r.max_fd_err;
  return j.dump(2);
}

std::string to_json(const DenoiseResult& r) {
  nlohmann::ordered_json j;
  j["lambda_init"] = r.lambda_init;
  j["lambda_final"] = r.lambda_final;
  j["train_mse_init"] = r.train_mse_init;
  j["train_mse_final"] = r.train_mse_final;
  j["test_mse_init"] = r.test_mse_init;
  j["test_mse_final"] = r.test_mse_final;
  j["test_mse_baseline"] = r.test_mse_baseline;
  j["solver_failure"] = r.solver_failure;
  return j.dump(2);
}

std::string to_json(const PoisonResult& r) {
  nlohmann::ordered_json j;
  j["clean_test_loss"] = r.clean_test_loss;
  j["poisoned_test_loss"] = r.poisoned_test_loss;
  j["grad_norm"] = r.grad_norm;
  j["solver_failure"] = r.solver_failure;
  return j.dump(2);
}

}  // namespace optlayer
