#include <random>

#include "doctest.h"
#include "optlayer/canon.hpp"
#include "optlayer/expr.hpp"
#include "optlayer/qp_diff.hpp"

using namespace optlayer;

namespace {

// min 1/2||z||^2 + theta'z  s.t.  sum(z) == 1, z <= theta (elementwise via G).
DppProblem small_qp_problem() {
  DppProblem p;
  auto z = var("z", 2);
  auto th = param("theta", 2);
  p.objective = add(quad_over_identity(z), inner_product(th, z));
  p.eq_constraints.push_back({sum(z), constant(1.0)});
  p.ineq_constraints.push_back({z, th});
  p.parameter_order.push_back({"theta", Shape{2, 1}});
  return p;
}

Mat dense_block(const std::vector<SparseEntry>& entries, const Vec& theta_t,
                Eigen::Index rows, Eigen::Index cols) {
  Mat M = Mat::Zero(rows, cols);
  for (const auto& e : entries) M(e.row, e.col) += e.val * theta_t[e.slice];
  return M;
}

}  // namespace

TEST_CASE("curvature analysis follows the composition rules") {
  auto x = var("x", 3);
  auto th = param("theta", 3);
  CHECK(curvature_of(sum_squares(x)).curvature == Curvature::Convex);
  CHECK(curvature_of(inner_product(th, x)).curvature == Curvature::Affine);
  CHECK(curvature_of(negate(sum_squares(x))).curvature == Curvature::Concave);
  // parameter * parameter is outside the restricted product rule
  auto t1 = param("a", 1);
  auto t2 = param("b", 1);
  CHECK(curvature_of(scalar_mul(t1, t2)).curvature == Curvature::Unknown);
  // ...but under plain DCP parameters are constants, so it is fine
  CHECK(curvature_of(scalar_mul(t1, t2), RuleSet::Dcp).curvature !=
        Curvature::Unknown);
}

TEST_CASE("verification accepts a compliant problem and localizes violations") {
  DppProblem ok = small_qp_problem();
  VerificationReport r = verify_dpp(ok);
  CHECK(r.ok);
  CHECK(r.violations.empty());

  DppProblem bad = small_qp_problem();
  bad.objective = negate(sum_squares(var("z", 2)));  // concave objective
  VerificationReport rb = verify_dpp(bad);
  CHECK_FALSE(rb.ok);
  REQUIRE_FALSE(rb.violations.empty());
  CHECK(rb.violations[0].path.find("objective") != std::string::npos);

  DppProblem bad2 = small_qp_problem();
  bad2.eq_constraints.push_back(
      {sum_squares(var("z", 2)), constant(1.0)});  // non-affine equality
  VerificationReport r2 = verify_dpp(bad2);
  CHECK_FALSE(r2.ok);
}

TEST_CASE("canonicalizing rejects unverified input") {
  DppProblem bad = small_qp_problem();
  bad.objective = negate(sum_squares(var("z", 2)));
  CHECK_THROWS_AS(canonicalize(bad), NotVerified);
}

TEST_CASE("linear cost tensor reproduces theta'z for random parameters") {
  DppProblem p;
  auto z = var("z", 3);
  auto th = param("theta", 3);
  p.objective = add(quad_over_identity(z), inner_product(th, z));
  p.ineq_constraints.push_back({negate(z), constant(Mat::Zero(3, 1))});
  p.parameter_order.push_back({"theta", Shape{3, 1}});
  AsaForm f = canonicalize(p);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < 5; ++t) {
    Vec theta(3);
    for (int i = 0; i < 3; ++i) theta[i] = gauss(rng);
    Vec theta_t(f.p + 1);
    theta_t << theta, 1.0;
    Mat q = dense_block(f.Qmat, theta_t, f.n_c, 1);
    // original coordinates of the canonical variable carry theta exactly
    for (Eigen::Index i = 0; i < 3; ++i)
      CHECK(q(f.retriever[i], 0) == doctest::Approx(theta[i]).epsilon(1e-12));
  }
}

TEST_CASE("constant objective terms land in the offset slice only") {
  DppProblem p;
  auto z = var("z", 2);
  p.objective = add(quad_over_identity(z), constant(3.5));
  p.eq_constraints.push_back({sum(z), constant(1.0)});
  AsaForm f = canonicalize(p);
  for (const auto& e : f.Qmat) CHECK(e.slice == f.p);
  for (const auto& e : f.r_lin) CHECK(e.slice == f.p);
  Vec theta_t = Vec::Zero(f.p + 1);
  theta_t[f.p] = 1.0;
  double r = 0;
  for (const auto& e : f.r_lin) r += e.val * theta_t[e.slice];
  CHECK(r == doctest::Approx(3.5));
}

TEST_CASE("instantiated blocks match the hand-written standard form") {
  DppProblem p = small_qp_problem();
  AsaForm f = canonicalize(p);
  Vec theta(2);
  theta << 0.3, -0.7;
  QpProblem qp = f.instantiate(theta);

  CHECK(qp.P.rows() == f.n_c);
  // original coordinates: P has the identity of 1/2||z||^2 (doubled to match
  // the 1/2 z'Pz convention), q carries theta
  Eigen::Index i0 = f.retriever[0], i1 = f.retriever[1];
  CHECK(qp.P(i0, i0) == doctest::Approx(1.0));
  CHECK(qp.P(i1, i1) == doctest::Approx(1.0));
  CHECK(qp.P(i0, i1) == doctest::Approx(0.0));
  CHECK(qp.q[i0] == doctest::Approx(0.3));
  CHECK(qp.q[i1] == doctest::Approx(-0.7));

  REQUIRE(qp.A.rows() == 1);
  CHECK(qp.A(0, i0) == doctest::Approx(1.0));
  CHECK(qp.A(0, i1) == doctest::Approx(1.0));
  CHECK(qp.b[0] == doctest::Approx(1.0));

  REQUIRE(qp.G.rows() == 2);
  Vec gh = qp.h;
  // z <= theta rows: G row has +1 at the variable, h carries theta
  for (Eigen::Index r = 0; r < 2; ++r) {
    double diag = qp.G(r, f.retriever[r]);
    CHECK(diag == doctest::Approx(1.0));
  }
  CHECK(gh[0] == doctest::Approx(0.3));
  CHECK(gh[1] == doctest::Approx(-0.7));
}

TEST_CASE("constraint tensors are affine in theta (blend check)") {
  DppProblem p = small_qp_problem();
  AsaForm f = canonicalize(p);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < 5; ++t) {
    Vec ta(2), tb(2);
    for (int i = 0; i < 2; ++i) {
      ta[i] = gauss(rng);
      tb[i] = gauss(rng);
    }
    double w = 0.37;
    QpProblem a = f.instantiate(ta);
    QpProblem b = f.instantiate(tb);
    QpProblem m = f.instantiate((w * ta + (1 - w) * tb).eval());
    auto blend = [&](const Mat& xa, const Mat& xb) {
      return (w * xa + (1 - w) * xb).eval();
    };
    CHECK((m.q - blend(a.q, b.q)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.A - blend(a.A, b.A)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.b - blend(a.b, b.b)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.G - blend(a.G, b.G)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((m.h - blend(a.h, b.h)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(m.r - blend(Mat::Constant(1, 1, a.r),
                               Mat::Constant(1, 1, b.r))(0, 0)) < 1e-12);
  }
}

TEST_CASE("forward evaluation agrees with solving the instantiated program") {
  DppProblem p = small_qp_problem();
  AsaForm f = canonicalize(p);
  Vec theta(2);
  theta << 1.0, 0.8;
  auto [x, rec] = asa_forward(f, theta);
  REQUIRE(x.size() == f.n_orig);

  QpProblem qp = f.instantiate(theta);
  QpSolution direct = solve_qp(validate_problem(qp));
  REQUIRE(direct.status == SolveStatus::Optimal);
  for (Eigen::Index i = 0; i < f.n_orig; ++i)
    CHECK(x[i] == doctest::Approx(direct.z_star[f.retriever[i]]).epsilon(1e-10));
}

TEST_CASE("relu instance: clamp semantics and flat gradient off the kink") {
  // min ||z - v||^2 s.t. z >= 0 with v a parameter: z* = max(v, 0)
  DppProblem p;
  auto z = var("z", 2);
  auto v = param("v", 2);
  p.objective = sum_squares(add(z, negate(v)));
  p.ineq_constraints.push_back({negate(z), constant(Mat::Zero(2, 1))});
  p.parameter_order.push_back({"v", Shape{2, 1}});
  AsaForm f = canonicalize(p);

  Vec theta(2);
  theta << 1.0, -2.0;
  auto [x, rec] = asa_forward(f, theta);
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(std::abs(x[1]) < 1e-6);
}

TEST_CASE("backward pass matches finite differences of the forward map") {
  DppProblem p = small_qp_problem();
  AsaForm f = canonicalize(p);
  Vec theta(2);
  theta << 0.9, 0.6;
  SolverConfig tight;
  tight.tol = 1e-11;
  auto [x, rec] = asa_forward(f, theta, tight);
  Vec seed(2);
  seed << 1.0, -0.5;
  AsaGrad g = asa_backward(f, rec, seed);
  REQUIRE(g.grad_theta.size() == 2);

  const double eps = 1e-6;
  for (Eigen::Index j = 0; j < 2; ++j) {
    Vec tp = theta, tm = theta;
    tp[j] += eps;
    tm[j] -= eps;
    double lp = seed.dot(asa_forward(f, tp, tight).first);
    double lm = seed.dot(asa_forward(f, tm, tight).first);
    double fd = (lp - lm) / (2 * eps);
    CHECK(std::abs(g.grad_theta[j] - fd) /
              std::max(1.0, std::abs(fd)) < 1e-4);
  }
}

TEST_CASE("canonical dump is deterministic") {
  DppProblem p = small_qp_problem();
  std::string a = asa_to_json(canonicalize(p));
  std::string b = asa_to_json(canonicalize(p));
  CHECK(a == b);
  CHECK(a.find("\"n_canonical\"") != std::string::npos);
}
