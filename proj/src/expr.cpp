#include "optlayer/expr.hpp"

#include <algorithm>

namespace optlayer {

const char* atom_name(AtomKind a) {
  switch (a) {
    case AtomKind::Add: return "add";
    case AtomKind::Negate: return "negate";
    case AtomKind::ScalarMul: return "scalar_mul";
    case AtomKind::MatVecMul: return "mat_vec_mul";
    case AtomKind::Sum: return "sum";
    case AtomKind::InnerProduct: return "inner_product";
    case AtomKind::SumSquares: return "sum_squares";
    case AtomKind::QuadOverIdentity: return "quad_over_identity";
    case AtomKind::Norm1: return "norm1";
    case AtomKind::MaxElementwise: return "max";
    case AtomKind::AffineIndex: return "index";
  }
  return "?";
}

const char* to_string(Curvature c) {
  switch (c) {
    case Curvature::Constant: return "Constant";
    case Curvature::ParameterAffine: return "ParameterAffine";
    case Curvature::Affine: return "Affine";
    case Curvature::Convex: return "Convex";
    case Curvature::Concave: return "Concave";
    case Curvature::Unknown: return "Unknown";
  }
  return "?";
}

namespace {

ExprPtr make_atom(AtomKind a, std::vector<ExprPtr> args, Shape shape) {
  auto node = std::make_shared<ExprNode>();
  node->kind = ExprKind::Atom;
  node->atom = a;
  node->args = std::move(args);
  node->shape = shape;
  return node;
}

[[noreturn]] void shape_error(const std::string& what) {
  throw DimensionMismatch("expression shapes: " + what);
}

}  // namespace

ExprPtr var(std::string name, Eigen::Index dim) {
  auto node = std::make_shared<ExprNode>();
  node->kind = ExprKind::Variable;
  node->name = std::move(name);
  node->shape = {dim, 1};
  return node;
}

ExprPtr param(std::string name, Eigen::Index rows, Eigen::Index cols) {
  auto node = std::make_shared<ExprNode>();
  node->kind = ExprKind::Parameter;
  node->name = std::move(name);
  node->shape = {rows, cols};
  return node;
}

ExprPtr constant(Mat value) {
  auto node = std::make_shared<ExprNode>();
  node->kind = ExprKind::Constant;
  node->shape = {value.rows(), value.cols()};
  node->value = std::move(value);
  return node;
}

ExprPtr constant(double value) {
  Mat m(1, 1);
  m(0, 0) = value;
  return constant(m);
}

ExprPtr add(ExprPtr a, ExprPtr b) {
  if (!(a->shape == b->shape)) shape_error("add of mismatched shapes");
  Shape s = a->shape;
  return make_atom(AtomKind::Add, {std::move(a), std::move(b)}, s);
}

ExprPtr negate(ExprPtr e) {
  // Fold constants so "-1" in source and a negative literal built directly
  // are the same node; the printer/parser round trip relies on this.
  if (e->kind == ExprKind::Constant) return constant(Mat(-e->value));
  Shape s = e->shape;
  return make_atom(AtomKind::Negate, {std::move(e)}, s);
}

ExprPtr scalar_mul(ExprPtr scalar, ExprPtr e) {
  if (scalar->shape.size() != 1) shape_error("scalar_mul needs scalar lhs");
  Shape s = e->shape;
  return make_atom(AtomKind::ScalarMul, {std::move(scalar), std::move(e)}, s);
}

ExprPtr mat_vec_mul(ExprPtr matrix, ExprPtr vec) {
  if (vec->shape.cols != 1 || matrix->shape.cols != vec->shape.rows)
    shape_error("mat_vec_mul inner dimensions");
  Shape s{matrix->shape.rows, 1};
  return make_atom(AtomKind::MatVecMul, {std::move(matrix), std::move(vec)},
                   s);
}

ExprPtr sum(ExprPtr e) {
  return make_atom(AtomKind::Sum, {std::move(e)}, {1, 1});
}

ExprPtr inner_product(ExprPtr a, ExprPtr b) {
  if (!(a->shape == b->shape) || a->shape.cols != 1)
    shape_error("inner_product of mismatched vectors");
  return make_atom(AtomKind::InnerProduct, {std::move(a), std::move(b)},
                   {1, 1});
}

ExprPtr sum_squares(ExprPtr e) {
  return make_atom(AtomKind::SumSquares, {std::move(e)}, {1, 1});
}

ExprPtr quad_over_identity(ExprPtr e) {
  return make_atom(AtomKind::QuadOverIdentity, {std::move(e)}, {1, 1});
}

ExprPtr norm1(ExprPtr e) {
  if (e->shape.cols != 1) shape_error("norm1 of non-vector");
  return make_atom(AtomKind::Norm1, {std::move(e)}, {1, 1});
}

ExprPtr max_elementwise(std::vector<ExprPtr> args) {
  if (args.empty()) shape_error("max of nothing");
  Shape s = args[0]->shape;
  for (const auto& a : args)
    if (!(a->shape == s)) shape_error("max of mismatched shapes");
  return make_atom(AtomKind::MaxElementwise, std::move(args), s);
}

ExprPtr affine_index(ExprPtr e, Eigen::Index i) {
  if (e->shape.cols != 1 || i < 0 || i >= e->shape.rows)
    shape_error("index out of range");
  auto node = make_atom(AtomKind::AffineIndex, {std::move(e)}, {1, 1});
  const_cast<ExprNode*>(node.get())->index = i;
  return node;
}

bool contains_variable(const ExprPtr& e) {
  if (e->kind == ExprKind::Variable) return true;
  for (const auto& a : e->args)
    if (contains_variable(a)) return true;
  return false;
}

bool contains_parameter(const ExprPtr& e) {
  if (e->kind == ExprKind::Parameter) return true;
  for (const auto& a : e->args)
    if (contains_parameter(a)) return true;
  return false;
}

namespace {

bool is_affine_or_below(Curvature c) {
  return c == Curvature::Constant || c == Curvature::ParameterAffine ||
         c == Curvature::Affine;
}

Curvature join_affine(Curvature a, Curvature b) {
  auto rank = [](Curvature c) {
    switch (c) {
      case Curvature::Constant: return 0;
      case Curvature::ParameterAffine: return 1;
      default: return 2;
    }
  };
  return rank(a) >= rank(b) ? a : b;
}

Curvature add_curv(Curvature a, Curvature b) {
  if (a == Curvature::Unknown || b == Curvature::Unknown)
    return Curvature::Unknown;
  if (is_affine_or_below(a) && is_affine_or_below(b)) return join_affine(a, b);
  auto convexish = [](Curvature c) {
    return c == Curvature::Convex || is_affine_or_below(c);
  };
  auto concaveish = [](Curvature c) {
    return c == Curvature::Concave || is_affine_or_below(c);
  };
  if (convexish(a) && convexish(b)) return Curvature::Convex;
  if (concaveish(a) && concaveish(b)) return Curvature::Concave;
  return Curvature::Unknown;
}

Curvature negate_curv(Curvature c) {
  switch (c) {
    case Curvature::Convex: return Curvature::Concave;
    case Curvature::Concave: return Curvature::Convex;
    default: return c;
  }
}

// Product rule shared by scalar_mul / mat_vec_mul / inner_product.
// Under DPP the product is affine when one side is parameter-free and the
// other is parameter-affine or constant; under DCP parameters count as
// constants so only variable-freeness matters.
Curvature product_curv(const ExprPtr& a, Curvature ca, const ExprPtr& b,
                       Curvature cb, RuleSet rules, bool scalar_known_sign,
                       double sign) {
  const bool a_hasvar = contains_variable(a);
  const bool b_hasvar = contains_variable(b);
  if (a_hasvar && b_hasvar) return Curvature::Unknown;

  if (!a_hasvar && !b_hasvar) {
    if (rules == RuleSet::Dcp) return join_affine(ca, cb);
    const bool a_haspar = contains_parameter(a);
    const bool b_haspar = contains_parameter(b);
    if (a_haspar && b_haspar) return Curvature::Unknown;  // theta * theta
    return (a_haspar || b_haspar) ? Curvature::ParameterAffine
                                  : Curvature::Constant;
  }

  const ExprPtr& coeff = a_hasvar ? b : a;
  Curvature var_curv = a_hasvar ? ca : cb;
  if (var_curv == Curvature::Unknown) return Curvature::Unknown;

  const bool coeff_haspar =
      rules == RuleSet::Dpp && contains_parameter(coeff);
  if (coeff_haspar) {
    // Parameter-affine coefficient: the variable side must be parameter-free
    // and affine.
    const ExprPtr& vside = a_hasvar ? a : b;
    if (var_curv == Curvature::Affine && !contains_parameter(vside))
      return Curvature::Affine;
    return Curvature::Unknown;
  }

  // Constant coefficient.
  if (var_curv == Curvature::Affine) return Curvature::Affine;
  if (scalar_known_sign) {
    Curvature c = var_curv;
    return sign >= 0 ? c : negate_curv(c);
  }
  return Curvature::Unknown;
}

struct Analyzer {
  RuleSet rules;

  Curvature analyze(const ExprPtr& e) {
    switch (e->kind) {
      case ExprKind::Constant:
        return Curvature::Constant;
      case ExprKind::Parameter:
        return rules == RuleSet::Dpp ? Curvature::ParameterAffine
                                     : Curvature::Constant;
      case ExprKind::Variable:
        return Curvature::Affine;
      case ExprKind::Atom:
        break;
    }
    switch (e->atom) {
      case AtomKind::Add:
        return add_curv(analyze(e->args[0]), analyze(e->args[1]));
      case AtomKind::Negate:
        return negate_curv(analyze(e->args[0]));
      case AtomKind::Sum:
      case AtomKind::AffineIndex:
        return analyze(e->args[0]);
      case AtomKind::ScalarMul: {
        const ExprPtr& sc = e->args[0];
        bool known_sign = sc->kind == ExprKind::Constant;
        double sign = known_sign ? sc->value(0, 0) : 0.0;
        return product_curv(sc, analyze(sc), e->args[1], analyze(e->args[1]),
                            rules, known_sign, sign);
      }
      case AtomKind::MatVecMul:
      case AtomKind::InnerProduct:
        return product_curv(e->args[0], analyze(e->args[0]), e->args[1],
                            analyze(e->args[1]), rules, false, 0.0);
      case AtomKind::SumSquares:
      case AtomKind::QuadOverIdentity:
      case AtomKind::Norm1: {
        Curvature c = analyze(e->args[0]);
        if (!contains_variable(e->args[0]) && rules == RuleSet::Dpp &&
            e->atom != AtomKind::Norm1 && contains_parameter(e->args[0]))
          return Curvature::Unknown;  // quadratic in parameters
        return is_affine_or_below(c) ? Curvature::Convex : Curvature::Unknown;
      }
      case AtomKind::MaxElementwise: {
        for (const auto& a : e->args) {
          Curvature c = analyze(a);
          if (!(is_affine_or_below(c) || c == Curvature::Convex))
            return Curvature::Unknown;
        }
        return Curvature::Convex;
      }
    }
    return Curvature::Unknown;
  }
};

std::vector<Monotonicity> monotonicities(const ExprNode& e) {
  if (e.kind != ExprKind::Atom) return {};
  size_t k = e.args.size();
  switch (e.atom) {
    case AtomKind::Add:
    case AtomKind::Sum:
    case AtomKind::AffineIndex:
    case AtomKind::MaxElementwise:
      return std::vector<Monotonicity>(k, Monotonicity::Nondecreasing);
    case AtomKind::Negate:
      return {Monotonicity::Nonincreasing};
    default:
      return std::vector<Monotonicity>(k, Monotonicity::None);
  }
}

void find_unknown_paths(const ExprPtr& e, RuleSet rules,
                        const std::string& path,
                        std::vector<Violation>& out) {
  Analyzer an{rules};
  if (an.analyze(e) != Curvature::Unknown) return;
  bool child_unknown = false;
  for (size_t i = 0; i < e->args.size(); ++i) {
    if (an.analyze(e->args[i]) == Curvature::Unknown) {
      child_unknown = true;
      find_unknown_paths(e->args[i], rules, path + "/arg" + std::to_string(i),
                         out);
    }
  }
  if (!child_unknown)
    out.push_back({path, std::string("rule violation at atom '") +
                             (e->kind == ExprKind::Atom ? atom_name(e->atom)
                                                        : "leaf") +
                             "'"});
}

VerificationReport verify(const DppProblem& p, RuleSet rules) {
  VerificationReport rep;
  Analyzer an{rules};
  auto require = [&](const ExprPtr& e, const std::string& path, bool affine,
                     bool convex_ok, bool concave_ok) {
    Curvature c = an.analyze(e);
    bool ok;
    if (affine)
      ok = is_affine_or_below(c);
    else
      ok = is_affine_or_below(c) || (convex_ok && c == Curvature::Convex) ||
           (concave_ok && c == Curvature::Concave);
    if (!ok) {
      if (c == Curvature::Unknown) {
        find_unknown_paths(e, rules, path, rep.violations);
      } else {
        rep.violations.push_back(
            {path, std::string("curvature ") + to_string(c) +
                       " not allowed here"});
      }
      rep.ok = false;
    }
  };
  if (!p.objective) {
    rep.ok = false;
    rep.violations.push_back({"objective", "missing objective"});
    return rep;
  }
  if (p.objective->shape.size() != 1) {
    rep.ok = false;
    rep.violations.push_back({"objective", "objective must be scalar"});
  }
  require(p.objective, "objective", false, true, false);
  for (size_t i = 0; i < p.eq_constraints.size(); ++i) {
    auto base = "eq" + std::to_string(i);
    require(p.eq_constraints[i].first, base + "/lhs", true, false, false);
    require(p.eq_constraints[i].second, base + "/rhs", true, false, false);
  }
  for (size_t i = 0; i < p.ineq_constraints.size(); ++i) {
    auto base = "ineq" + std::to_string(i);
    require(p.ineq_constraints[i].first, base + "/lhs", false, true, false);
    require(p.ineq_constraints[i].second, base + "/rhs", false, false, true);
  }
  return rep;
}

}  // namespace

CurvatureTag curvature_of(const ExprPtr& e, RuleSet rules) {
  CurvatureTag tag;
  tag.curvature = Analyzer{rules}.analyze(e);
  tag.arg_monotonicity = monotonicities(*e);
  return tag;
}

Eigen::Index DppProblem::param_dim() const {
  Eigen::Index p = 0;
  for (const auto& [name, shape] : parameter_order) p += shape.size();
  return p;
}

VerificationReport verify_dpp(const DppProblem& p) {
  return verify(p, RuleSet::Dpp);
}

VerificationReport verify_dcp(const DppProblem& p) {
  return verify(p, RuleSet::Dcp);
}

}  // namespace optlayer
