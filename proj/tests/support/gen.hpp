#pragma once

// Random problem-AST generator for parser round-trip and fuzz tests.
// Produces only shapes the printer/parser pair can represent faithfully
// (e.g. no single-column matrices, whose 'M * z' rendering is ambiguous
// with scalar multiplication).

#include <random>
#include <string>
#include <vector>

#include "optlayer/dsl.hpp"
#include "optlayer/expr.hpp"

namespace optlayer::test {

struct GenContext {
  std::mt19937_64 rng;
  std::vector<ExprPtr> vars;    // vector variables
  std::vector<ExprPtr> params;  // vectors, scalars, and wide matrices
  DppProblem problem;

  explicit GenContext(std::uint64_t seed) : rng(seed) {}

  int pick(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  }
  double value() {
    // Round-trippable but varied magnitudes.
    double v = std::uniform_real_distribution<double>(-4.0, 4.0)(rng);
    if (pick(0, 3) == 0) return static_cast<double>(static_cast<int>(v));
    return v;
  }

  Mat literal(Eigen::Index r, Eigen::Index c) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = value();
    return m;
  }

  void declare() {
    int nv = pick(1, 3), np = pick(0, 3);
    for (int i = 0; i < nv; ++i)
      vars.push_back(var("x" + std::to_string(i), pick(1, 4)));
    for (int i = 0; i < np; ++i) {
      std::string name = "p" + std::to_string(i);
      Eigen::Index rows = pick(1, 4);
      Eigen::Index cols = pick(0, 2) == 0 ? pick(2, 3) : 1;
      params.push_back(param(name, rows, cols));
      problem.parameter_order.emplace_back(name, Shape{rows, cols});
    }
  }

  // Affine (in the variables) expression of the requested vector length.
  ExprPtr affine_vec(Eigen::Index len, int depth) {
    std::vector<ExprPtr> pool;
    for (const auto& v : vars)
      if (v->shape.rows == len) pool.push_back(v);
    for (const auto& p : params)
      if (p->shape.rows == len && p->shape.cols == 1) pool.push_back(p);
    if (depth <= 0 || pick(0, 2) == 0) {
      if (!pool.empty() && pick(0, 3) > 0)
        return pool[static_cast<size_t>(pick(0, int(pool.size()) - 1))];
      return constant(literal(len, 1));
    }
    switch (pick(0, 4)) {
      case 0:
        return add(affine_vec(len, depth - 1), affine_vec(len, depth - 1));
      case 1:
        return negate(affine_vec(len, depth - 1));
      case 2:
        return scalar_mul(affine_scalar(depth - 1), affine_vec(len, depth - 1));
      case 3: {
        // wide matrix times vector
        for (const auto& p : params)
          if (p->shape.rows == len && p->shape.cols >= 2)
            return mat_vec_mul(p, affine_vec(p->shape.cols, depth - 1));
        return mat_vec_mul(constant(literal(len, 2)), affine_vec(2, depth - 1));
      }
      default: {
        // indexing produces a scalar, so it only fits a length-1 slot
        if (len == 1) {
          Eigen::Index inner = pick(2, 4);
          return affine_index(affine_vec(inner, depth - 1),
                              pick(0, int(inner) - 1));
        }
        return add(affine_vec(len, depth - 1), affine_vec(len, depth - 1));
      }
    }
  }

  ExprPtr affine_scalar(int depth) {
    switch (depth <= 0 ? 0 : pick(0, 3)) {
      case 1:
        return sum(affine_vec(pick(1, 4), depth - 1));
      case 2: {
        Eigen::Index len = pick(2, 4);
        return inner_product(constant(literal(len, 1)), affine_vec(len, depth - 1));
      }
      case 3:
        return add(affine_scalar(depth - 1), negate(affine_scalar(depth - 1)));
      default:
        return constant(value());
    }
  }

  ExprPtr convex_scalar(int depth) {
    switch (pick(0, 4)) {
      case 0:
        return sum_squares(parameter_free_affine(pick(1, 4), depth - 1));
      case 1:
        return quad_over_identity(parameter_free_affine(pick(1, 4), depth - 1));
      case 2:
        return sum(norm1(parameter_free_affine(pick(1, 4), depth - 1)));
      case 3: {
        std::vector<ExprPtr> args;
        int k = pick(1, 3);
        for (int i = 0; i < k; ++i) args.push_back(affine_scalar(depth - 1));
        return sum(max_elementwise(std::move(args)));
      }
      default:
        return affine_scalar(depth);
    }
  }

  // Parameter-free affine expressions keep sum_squares DPP-valid without
  // relying on the parametrized-quadratic special case.
  ExprPtr parameter_free_affine(Eigen::Index len, int depth) {
    std::vector<ExprPtr> pool;
    for (const auto& v : vars)
      if (v->shape.rows == len) pool.push_back(v);
    if (depth <= 0 || pool.empty() || pick(0, 1) == 0) {
      if (!pool.empty())
        return pool[static_cast<size_t>(pick(0, int(pool.size()) - 1))];
      return constant(literal(len, 1));
    }
    return add(pool[static_cast<size_t>(pick(0, int(pool.size()) - 1))],
               constant(literal(len, 1)));
  }

  DppProblem generate() {
    declare();
    ExprPtr obj = convex_scalar(2);
    int extra = pick(0, 2);
    for (int i = 0; i < extra; ++i) obj = add(obj, convex_scalar(1));
    problem.objective = obj;
    int ne = pick(0, 2), ni = pick(0, 2);
    for (int i = 0; i < ne; ++i) {
      Eigen::Index len = pick(1, 3);
      problem.eq_constraints.emplace_back(affine_vec(len, 1),
                                          affine_vec(len, 1));
    }
    for (int i = 0; i < ni; ++i) {
      Eigen::Index len = pick(1, 3);
      problem.ineq_constraints.emplace_back(affine_vec(len, 1),
                                            affine_vec(len, 1));
    }
    return problem;
  }
};

inline DppProblem random_problem(std::uint64_t seed) {
  GenContext g(seed);
  return g.generate();
}

// Random byte strings biased toward the DSL's token alphabet.
inline std::string fuzz_input(std::mt19937_64& rng) {
  static const char alphabet[] =
      "var pam minimize subject to sum_squares norm1 max()[],'*+-==<=0123456789. \n_xz";
  std::uniform_int_distribution<int> len(0, 120);
  std::uniform_int_distribution<int> mode(0, 9);
  std::uniform_int_distribution<int> pickc(0, sizeof(alphabet) - 2);
  std::uniform_int_distribution<int> anyc(1, 255);
  int n = len(rng);
  std::string s;
  s.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    s.push_back(mode(rng) == 0 ? static_cast<char>(anyc(rng))
                               : alphabet[pickc(rng)]);
  return s;
}

}  // namespace optlayer::test
