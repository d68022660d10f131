#include <cstdlib>

#include "doctest.h"
#include "optlayer/experiments.hpp"
#include "optlayer/qp.hpp"
#include "support/oracles.hpp"

using namespace optlayer;

TEST_CASE("validation accepts the identity problem") {
  QpProblem p;
  p.P = Mat::Identity(2, 2);
  p.q = Vec::Zero(2);
  CHECK_NOTHROW(validate_problem(p));
}

TEST_CASE("validation symmetrizes, then rejects indefinite P") {
  QpProblem p;
  p.P = Mat::Zero(2, 2);
  p.P(0, 1) = 1.0;  // symmetric part [[0,.5],[.5,0]], eigenvalues +-0.5
  p.q = Vec::Zero(2);
  CHECK_THROWS_AS(validate_problem(p), NotPsd);
}

TEST_CASE("validation rejects rank-deficient equality rows") {
  QpProblem p;
  p.P = Mat::Identity(2, 2);
  p.q = Vec::Zero(2);
  p.A = Mat(2, 2);
  p.A << 1, 0, 2, 0;
  p.b = Vec::Zero(2);
  CHECK_THROWS_AS(validate_problem(p), RankDeficientEquality);
}

TEST_CASE("unconstrained solve inverts P") {
  QpProblem p;
  p.P = Mat::Identity(2, 2);
  p.q = Vec(2);
  p.q << -1, -2;
  QpSolution s = solve_qp(validate_problem(p));
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(s.z_star[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(s.z_star[1] == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("active scalar bound: min z^2/2 s.t. z >= 1") {
  QpProblem p;
  p.P = Mat::Identity(1, 1);
  p.q = Vec::Zero(1);
  p.G = -Mat::Identity(1, 1);
  p.h = -Vec::Ones(1);
  QpSolution s = solve_qp(validate_problem(p));
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(s.z_star[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(s.lambda_star[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(s.slack[0]) < 1e-7);
}

TEST_CASE("random problems match the active-set enumeration oracle") {
  std::mt19937_64 rng(101);
  for (int t = 0; t < 50; ++t) {
    QpProblem p = random_feasible_qp(rng, 4, 1, 3);
    ValidatedProblem vp = validate_problem(p);
    QpSolution s = solve_qp(vp);
    REQUIRE(s.status == SolveStatus::Optimal);
    auto oracle = test::brute_force_qp(p);
    REQUIRE(oracle.has_value());
    CHECK(p.objective(s.z_star) ==
          doctest::Approx(oracle->objective).epsilon(1e-6));
    CHECK(kkt_residuals(vp, s).max() < 1e-6);
  }
}

TEST_CASE("optimality residuals behave as definitions") {
  QpProblem p;
  p.P = Mat::Identity(1, 1);
  p.q = Vec::Zero(1);
  p.G = -Mat::Identity(1, 1);
  p.h = -Vec::Ones(1);
  ValidatedProblem vp = validate_problem(p);

  QpSolution exact;  // analytic optimum z=1, lambda=1
  exact.z_star = Vec::Ones(1);
  exact.nu_star = Vec(0);
  exact.lambda_star = Vec::Ones(1);
  exact.slack = Vec::Zero(1);
  exact.status = SolveStatus::Optimal;
  CHECK(kkt_residuals(vp, exact).max() < 1e-12);

  QpSolution off = exact;
  off.z_star[0] += 1e-3;
  ResidualReport r = kkt_residuals(vp, off);
  CHECK(r.stationarity == doctest::Approx(1e-3));

  QpProblem pe;
  pe.P = Mat::Identity(1, 1);
  pe.q = Vec::Zero(1);
  pe.A = Mat::Identity(1, 1);
  pe.b = Vec::Ones(1);
  QpSolution bad;
  bad.z_star = 3 * Vec::Ones(1);
  bad.nu_star = Vec::Zero(1);
  bad.lambda_star = Vec(0);
  bad.slack = Vec(0);
  CHECK(kkt_residuals(validate_problem(pe), bad).primal_eq ==
        doctest::Approx(2.0));
}

TEST_CASE("jointly scaling an equality row leaves the optimum fixed") {
  std::mt19937_64 rng(7);
  QpProblem p = random_feasible_qp(rng, 5, 2, 2);
  QpSolution s0 = solve_qp(validate_problem(p));
  REQUIRE(s0.status == SolveStatus::Optimal);
  const double c = 3.7;
  QpProblem ps = p;
  ps.A.row(0) *= c;
  ps.b[0] *= c;
  QpSolution s1 = solve_qp(validate_problem(ps));
  REQUIRE(s1.status == SolveStatus::Optimal);
  CHECK((s0.z_star - s1.z_star).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(s1.nu_star[0] == doctest::Approx(s0.nu_star[0] / c).epsilon(1e-6));
}

TEST_CASE("equality-only and fully unconstrained edge cases") {
  QpProblem p;
  p.P = Mat::Identity(2, 2);
  p.q = Vec::Zero(2);
  p.A = Mat(1, 2);
  p.A << 1, 1;
  p.b = Vec::Ones(1);
  QpSolution s = solve_qp(validate_problem(p));
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(s.z_star[0] == doctest::Approx(0.5));
  CHECK(s.z_star[1] == doctest::Approx(0.5));
}

TEST_CASE("empty feasible set does not come back Optimal") {
  QpProblem p;  // z <= 0 and z >= 1
  p.P = Mat::Identity(1, 1);
  p.q = Vec::Zero(1);
  p.G = Mat(2, 1);
  p.G << 1, -1;
  p.h = Vec(2);
  p.h << 0, -1;
  QpSolution s = solve_qp(validate_problem(p));
  CHECK(s.status != SolveStatus::Optimal);
}

TEST_CASE("batch solving is elementwise identical to a sequential loop") {
  std::mt19937_64 rng(55);
  std::vector<ValidatedProblem> batch;
  for (int i = 0; i < 16; ++i)
    batch.push_back(validate_problem(random_feasible_qp(rng, 4, 1, 3)));

  std::vector<QpSolution> seq;
  for (const auto& vp : batch) seq.push_back(solve_qp(vp));

  for (const char* threads : {"1", "3", "16"}) {
    setenv("OPTLAYER_THREADS", threads, 1);
    std::vector<QpSolution> par = solve_batch(batch);
    unsetenv("OPTLAYER_THREADS");
    REQUIRE(par.size() == seq.size());
    for (size_t i = 0; i < seq.size(); ++i) {
      CHECK(par[i].status == seq[i].status);
      CHECK(par[i].z_star == seq[i].z_star);  // bitwise
      CHECK(par[i].lambda_star == seq[i].lambda_star);
      CHECK(par[i].nu_star == seq[i].nu_star);
    }
  }
}

TEST_CASE("singleton batch and replicated batch") {
  std::mt19937_64 rng(9);
  QpProblem p = random_feasible_qp(rng, 3, 1, 2);
  ValidatedProblem vp = validate_problem(p);
  QpSolution ref = solve_qp(vp);

  std::vector<ValidatedProblem> one{vp};
  CHECK(solve_batch(one)[0].z_star == ref.z_star);

  std::vector<ValidatedProblem> eight(8, vp);
  auto sols = solve_batch(eight);
  for (const auto& s : sols) CHECK(s.z_star == ref.z_star);
}
