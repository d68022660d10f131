#pragma once

#include <memory>
#include <string>
#include <vector>

#include "optlayer/types.hpp"

namespace optlayer {

enum class ExprKind { Variable, Parameter, Constant, Atom };

enum class AtomKind {
  Add,
  Negate,
  ScalarMul,
  MatVecMul,
  Sum,
  InnerProduct,
  SumSquares,        // ||.||^2
  QuadOverIdentity,  // 1/2 ||.||^2
  Norm1,
  MaxElementwise,
  AffineIndex,
};

const char* atom_name(AtomKind a);

struct Shape {
  Eigen::Index rows = 1;
  Eigen::Index cols = 1;
  Eigen::Index size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprKind kind = ExprKind::Constant;
  std::string name;          // Variable / Parameter
  Shape shape;
  Mat value;                 // Constant (row-major semantics for flattening)
  AtomKind atom = AtomKind::Add;
  std::vector<ExprPtr> args;
  Eigen::Index index = 0;    // AffineIndex row
};

// Construction helpers. Variables are vectors; parameters may be matrices.
ExprPtr var(std::string name, Eigen::Index dim);
ExprPtr param(std::string name, Eigen::Index rows, Eigen::Index cols = 1);
ExprPtr constant(Mat value);
ExprPtr constant(double value);
ExprPtr add(ExprPtr a, ExprPtr b);
ExprPtr negate(ExprPtr e);
ExprPtr scalar_mul(ExprPtr scalar, ExprPtr e);
ExprPtr mat_vec_mul(ExprPtr matrix, ExprPtr vec);
ExprPtr sum(ExprPtr e);
ExprPtr inner_product(ExprPtr a, ExprPtr b);
ExprPtr sum_squares(ExprPtr e);
ExprPtr quad_over_identity(ExprPtr e);
ExprPtr norm1(ExprPtr e);
ExprPtr max_elementwise(std::vector<ExprPtr> args);
ExprPtr affine_index(ExprPtr e, Eigen::Index i);

enum class Curvature {
  Constant,
  ParameterAffine,
  Affine,
  Convex,
  Concave,
  Unknown,
};

const char* to_string(Curvature c);

enum class Monotonicity { Nondecreasing, Nonincreasing, None };

struct CurvatureTag {
  Curvature curvature = Curvature::Unknown;
  std::vector<Monotonicity> arg_monotonicity;
};

enum class RuleSet { Dpp, Dcp };

// Bottom-up composition-rule analysis. Under DCP parameters are opaque
// constants; under DPP they are affine objects with the restricted
// product rule.
CurvatureTag curvature_of(const ExprPtr& e, RuleSet rules = RuleSet::Dpp);

bool contains_variable(const ExprPtr& e);
bool contains_parameter(const ExprPtr& e);

struct DppProblem {
  ExprPtr objective;  // minimized
  std::vector<std::pair<ExprPtr, ExprPtr>> eq_constraints;    // lhs == rhs
  std::vector<std::pair<ExprPtr, ExprPtr>> ineq_constraints;  // lhs <= rhs
  std::vector<std::pair<std::string, Shape>> parameter_order;

  Eigen::Index param_dim() const;
};

struct Violation {
  std::string path;  // e.g. "objective/arg0"
  std::string message;
};

struct VerificationReport {
  bool ok = true;
  std::vector<Violation> violations;
};

VerificationReport verify_dpp(const DppProblem& p);
VerificationReport verify_dcp(const DppProblem& p);

}  // namespace optlayer
