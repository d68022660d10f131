#include "optlayer/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <sstream>
#include <vector>

namespace optlayer {

namespace {

enum class Tok {
  Ident,
  Number,
  KwVar,
  KwParam,
  KwMinimize,
  KwSubject,
  KwTo,
  Plus,
  Minus,
  Star,
  Prime,
  LBracket,
  RBracket,
  LParen,
  RParen,
  Comma,
  EqEq,
  LessEq,
  Assign,
  Newline,  // statement terminator; suppressed inside brackets/parens
  End,
};

struct Token {
  Tok type = Tok::End;
  std::string text;
  double number = 0.0;
  SourceLocation loc;
};

std::vector<Token> lex(const std::string& text) {
  std::vector<Token> out;
  SourceLocation loc;
  size_t i = 0;
  int depth = 0;  // ( and [ nesting; newlines inside are whitespace
  auto push = [&](Tok t, std::string s) {
    out.push_back({t, std::move(s), 0.0, loc});
  };
  while (i < text.size()) {
    char c = text[i];
    if (c == '\n') {
      if (depth == 0 && !out.empty() && out.back().type != Tok::Newline)
        push(Tok::Newline, "\\n");
      ++loc.line;
      loc.column = 1;
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++loc.column;
      ++i;
      continue;
    }
    if (c == '#') {
      while (i < text.size() && text[i] != '\n') ++i;
      continue;
    }
    SourceLocation start = loc;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i;
      while (j < text.size() &&
             (std::isalnum(static_cast<unsigned char>(text[j])) ||
              text[j] == '_'))
        ++j;
      std::string word = text.substr(i, j - i);
      Tok t = Tok::Ident;
      if (word == "var") t = Tok::KwVar;
      else if (word == "param") t = Tok::KwParam;
      else if (word == "minimize") t = Tok::KwMinimize;
      else if (word == "subject") t = Tok::KwSubject;
      else if (word == "to") t = Tok::KwTo;
      loc.column += static_cast<int>(j - i);
      out.push_back({t, word, 0.0, start});
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < text.size() &&
         std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      size_t j = i;
      while (j < text.size() &&
             (std::isdigit(static_cast<unsigned char>(text[j])) ||
              text[j] == '.' || text[j] == 'e' || text[j] == 'E' ||
              ((text[j] == '+' || text[j] == '-') && j > i &&
               (text[j - 1] == 'e' || text[j - 1] == 'E'))))
        ++j;
      std::string num = text.substr(i, j - i);
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(),
                                       value);
      if (ec != std::errc() || ptr != num.data() + num.size())
        throw LexError("LexError", start, "malformed number '" + num + "'");
      loc.column += static_cast<int>(j - i);
      out.push_back({Tok::Number, num, value, start});
      i = j;
      continue;
    }
    auto two = text.substr(i, 2);
    if (two == "==") {
      push(Tok::EqEq, "==");
      i += 2;
      loc.column += 2;
      continue;
    }
    if (two == "<=") {
      push(Tok::LessEq, "<=");
      i += 2;
      loc.column += 2;
      continue;
    }
    if (c == '(' || c == '[') ++depth;
    if (c == ')' || c == ']') depth = std::max(0, depth - 1);
    Tok t;
    switch (c) {
      case '+': t = Tok::Plus; break;
      case '-': t = Tok::Minus; break;
      case '*': t = Tok::Star; break;
      case '\'': t = Tok::Prime; break;
      case '[': t = Tok::LBracket; break;
      case ']': t = Tok::RBracket; break;
      case '(': t = Tok::LParen; break;
      case ')': t = Tok::RParen; break;
      case ',': t = Tok::Comma; break;
      case '=': t = Tok::Assign; break;
      default:
        throw LexError("LexError", loc,
                       std::string("unexpected character '") + c + "'");
    }
    push(t, std::string(1, c));
    ++i;
    ++loc.column;
  }
  Token end;
  end.loc = loc;
  out.push_back(end);
  return out;
}

// Parsed subexpression; `transposed` marks a pending postfix '.
struct Operand {
  ExprPtr expr;
  bool transposed = false;
  SourceLocation loc;
};

struct Parser {
  std::vector<Token> toks;
  size_t pos = 0;
  std::map<std::string, ExprPtr> symbols;  // declared vars/params
  ParsedProblem result;

  const Token& peek() const { return toks[pos]; }
  Token take() { return toks[pos++]; }
  bool accept(Tok t) {
    if (peek().type == t) {
      ++pos;
      return true;
    }
    return false;
  }
  Token expect(Tok t, const std::string& what) {
    if (peek().type != t)
      throw ParseError("ParseError", peek().loc,
                       "expected " + what + ", found '" + peek().text + "'");
    return take();
  }

  Mat parse_literal() {
    // [a, b, ...] vector or [[...], [...]] matrix
    SourceLocation loc = peek().loc;
    expect(Tok::LBracket, "'['");
    std::vector<std::vector<double>> rows;
    if (peek().type == Tok::LBracket) {
      while (true) {
        expect(Tok::LBracket, "'['");
        std::vector<double> row;
        if (peek().type != Tok::RBracket) {
          do {
            row.push_back(parse_signed_number());
          } while (accept(Tok::Comma));
        }
        expect(Tok::RBracket, "']'");
        rows.push_back(std::move(row));
        if (!accept(Tok::Comma)) break;
      }
      expect(Tok::RBracket, "']'");
    } else {
      std::vector<double> col;
      if (peek().type != Tok::RBracket) {
        do {
          col.push_back(parse_signed_number());
        } while (accept(Tok::Comma));
      }
      expect(Tok::RBracket, "']'");
      for (double v : col) rows.push_back({v});
    }
    if (rows.empty())
      throw ParseError("ParseError", loc, "empty literal");
    size_t cols = rows[0].size();
    for (const auto& r : rows)
      if (r.size() != cols)
        throw ParseError("ParseError", loc, "ragged matrix literal");
    Mat m(static_cast<Eigen::Index>(rows.size()),
          static_cast<Eigen::Index>(cols));
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = 0; j < cols; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            rows[i][j];
    return m;
  }

  double parse_signed_number() {
    bool neg = accept(Tok::Minus);
    Token t = expect(Tok::Number, "number");
    return neg ? -t.number : t.number;
  }

  void parse_decl() {
    bool is_param = peek().type == Tok::KwParam;
    take();
    Token name = expect(Tok::Ident, "identifier");
    if (symbols.count(name.text))
      throw ParseError("ParseError", name.loc,
                       "duplicate declaration of '" + name.text + "'");
    expect(Tok::LBracket, "'['");
    Token r = expect(Tok::Number, "dimension");
    Eigen::Index rows = static_cast<Eigen::Index>(r.number);
    Eigen::Index cols = 1;
    if (accept(Tok::Comma)) {
      Token c = expect(Tok::Number, "dimension");
      cols = static_cast<Eigen::Index>(c.number);
    }
    expect(Tok::RBracket, "']'");
    if (rows < 1 || cols < 1)
      throw ParseError("ParseError", r.loc, "dimensions must be positive");
    if (is_param) {
      symbols[name.text] = param(name.text, rows, cols);
      result.problem.parameter_order.emplace_back(name.text,
                                                  Shape{rows, cols});
    } else {
      if (cols != 1)
        throw ParseError("ParseError", name.loc,
                         "variables must be vectors");
      symbols[name.text] = var(name.text, rows);
    }
    if (accept(Tok::Assign)) {
      Mat value = parse_literal();
      if (value.rows() != rows || value.cols() != cols)
        throw ParseError("ParseError", name.loc,
                         "literal shape does not match declaration");
      if (!is_param)
        throw ParseError("ParseError", name.loc,
                         "only parameters take value bindings");
      result.parameter_values[name.text] = std::move(value);
    }
  }

  Operand parse_primary() {
    SourceLocation loc = peek().loc;
    if (peek().type == Tok::Number) {
      Token t = take();
      return {constant(t.number), false, loc};
    }
    if (peek().type == Tok::LBracket) {
      return {constant(parse_literal()), false, loc};
    }
    if (accept(Tok::Minus)) {
      Operand inner = parse_postfix();
      return {negate(inner.expr), false, loc};
    }
    if (accept(Tok::LParen)) {
      Operand e = parse_expr();
      expect(Tok::RParen, "')'");
      return e;
    }
    Token name = expect(Tok::Ident, "expression");
    if (peek().type == Tok::LParen) return parse_call(name);
    auto it = symbols.find(name.text);
    if (it == symbols.end())
      throw UndeclaredIdentifier("UndeclaredIdentifier", name.loc,
                                 "'" + name.text + "' is not declared");
    return {it->second, false, name.loc};
  }

  Operand parse_call(const Token& name) {
    expect(Tok::LParen, "'('");
    std::vector<ExprPtr> args;
    if (peek().type != Tok::RParen) {
      do {
        args.push_back(require_plain(parse_expr()));
      } while (accept(Tok::Comma));
    }
    expect(Tok::RParen, "')'");
    auto arity = [&](size_t want) {
      if (args.size() != want)
        throw ArityError("ArityError", name.loc,
                         "'" + name.text + "' expects " +
                             std::to_string(want) + " argument(s), got " +
                             std::to_string(args.size()));
    };
    try {
      if (name.text == "sum_squares") { arity(1); return {sum_squares(args[0]), false, name.loc}; }
      if (name.text == "quad_over_identity") { arity(1); return {quad_over_identity(args[0]), false, name.loc}; }
      if (name.text == "norm1") { arity(1); return {norm1(args[0]), false, name.loc}; }
      if (name.text == "sum") { arity(1); return {sum(args[0]), false, name.loc}; }
      if (name.text == "max") {
        if (args.empty())
          throw ArityError("ArityError", name.loc,
                           "'max' needs at least one argument");
        return {max_elementwise(std::move(args)), false, name.loc};
      }
    } catch (const DimensionMismatch& e) {
      throw ParseError("ParseError", name.loc, e.what());
    }
    throw UndeclaredIdentifier("UndeclaredIdentifier", name.loc,
                               "unknown function '" + name.text + "'");
  }

  Operand parse_postfix() {
    Operand e = parse_primary();
    while (true) {
      if (accept(Tok::Prime)) {
        if (e.transposed)
          throw ParseError("ParseError", e.loc, "double transpose");
        e.transposed = true;
        continue;
      }
      if (peek().type == Tok::LBracket) {
        SourceLocation loc = take().loc;
        Token idx = expect(Tok::Number, "index");
        expect(Tok::RBracket, "']'");
        try {
          e.expr = affine_index(require_plain(e),
                                static_cast<Eigen::Index>(idx.number));
        } catch (const DimensionMismatch& err) {
          throw ParseError("ParseError", loc, err.what());
        }
        continue;
      }
      break;
    }
    return e;
  }

  ExprPtr require_plain(const Operand& e) {
    if (e.transposed)
      throw ParseError("ParseError", e.loc,
                       "transpose only allowed directly left of '*'");
    return e.expr;
  }

  Operand parse_term() {
    Operand lhs = parse_postfix();
    while (accept(Tok::Star)) {
      Operand rhs = parse_postfix();
      SourceLocation loc = lhs.loc;
      try {
        if (lhs.transposed) {
          lhs = {inner_product(lhs.expr, require_plain(rhs)), false, loc};
        } else if (lhs.expr->shape.size() == 1) {
          lhs = {scalar_mul(lhs.expr, require_plain(rhs)), false, loc};
        } else if (rhs.expr->shape.size() == 1 && !rhs.transposed) {
          lhs = {scalar_mul(rhs.expr, lhs.expr), false, loc};
        } else if (lhs.expr->shape.cols > 1) {
          lhs = {mat_vec_mul(lhs.expr, require_plain(rhs)), false, loc};
        } else {
          throw ParseError("ParseError", loc, "invalid '*' operands");
        }
      } catch (const DimensionMismatch& e) {
        throw ParseError("ParseError", loc, e.what());
      }
    }
    return lhs;
  }

  Operand parse_expr() {
    Operand lhs = parse_term();
    while (peek().type == Tok::Plus || peek().type == Tok::Minus) {
      bool minus = take().type == Tok::Minus;
      Operand rhs = parse_term();
      SourceLocation loc = lhs.loc;
      try {
        ExprPtr r = require_plain(rhs);
        lhs = {add(require_plain(lhs), minus ? negate(r) : r), false, loc};
      } catch (const DimensionMismatch& e) {
        throw ParseError("ParseError", loc, e.what());
      }
    }
    return lhs;
  }

  void skip_newlines() {
    while (peek().type == Tok::Newline) take();
  }
  void end_statement() {
    if (peek().type != Tok::End) expect(Tok::Newline, "end of line");
    skip_newlines();
  }

  void run(const std::string& text) {
    toks = lex(text);
    skip_newlines();
    while (peek().type == Tok::KwVar || peek().type == Tok::KwParam) {
      parse_decl();
      end_statement();
    }
    expect(Tok::KwMinimize, "'minimize'");
    result.problem.objective = require_plain(parse_expr());
    end_statement();
    if (peek().type == Tok::KwSubject) {
      take();
      expect(Tok::KwTo, "'to'");
      end_statement();
      do {
        ExprPtr lhs = require_plain(parse_expr());
        Tok op = peek().type;
        if (op != Tok::EqEq && op != Tok::LessEq)
          throw ParseError("ParseError", peek().loc,
                           "expected '==' or '<=' in constraint");
        take();
        ExprPtr rhs = require_plain(parse_expr());
        if (!(lhs->shape == rhs->shape))
          throw ParseError("ParseError", peek().loc,
                           "constraint sides have different shapes");
        if (op == Tok::EqEq)
          result.problem.eq_constraints.emplace_back(lhs, rhs);
        else
          result.problem.ineq_constraints.emplace_back(lhs, rhs);
        end_statement();
      } while (peek().type != Tok::End);
    }
    expect(Tok::End, "end of input");
  }
};

// ---- printer ------------------------------------------------------------

std::string fmt_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string fmt_literal(const Mat& m) {
  std::ostringstream os;
  if (m.rows() == 1 && m.cols() == 1) return fmt_number(m(0, 0));
  if (m.cols() == 1) {
    os << "[";
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      os << (i ? ", " : "") << fmt_number(m(i, 0));
    os << "]";
    return os.str();
  }
  os << "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << (i ? ", [" : "[");
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      os << (j ? ", " : "") << fmt_number(m(i, j));
    os << "]";
  }
  os << "]";
  return os.str();
}

// precedence: 0 add, 1 mul, 2 atomic
std::string fmt_expr(const ExprPtr& e, int parent_prec);

std::string wrap(const std::string& s, int prec, int parent_prec) {
  return prec < parent_prec ? "(" + s + ")" : s;
}

std::string fmt_expr(const ExprPtr& e, int parent_prec) {
  switch (e->kind) {
    case ExprKind::Variable:
    case ExprKind::Parameter:
      return e->name;
    case ExprKind::Constant:
      return fmt_literal(e->value);
    case ExprKind::Atom:
      break;
  }
  switch (e->atom) {
    case AtomKind::Add: {
      std::string lhs = fmt_expr(e->args[0], 0);
      const ExprPtr& b = e->args[1];
      std::string s;
      if (b->kind == ExprKind::Atom && b->atom == AtomKind::Negate)
        s = lhs + " - " + fmt_expr(b->args[0], 1);
      else
        s = lhs + " + " + fmt_expr(b, 1);
      return wrap(s, 0, parent_prec);
    }
    case AtomKind::Negate:
      return wrap("-" + fmt_expr(e->args[0], 2), 1, parent_prec);
    case AtomKind::ScalarMul:
      return wrap(fmt_expr(e->args[0], 2) + " * " + fmt_expr(e->args[1], 2),
                  1, parent_prec);
    case AtomKind::MatVecMul:
      return wrap(fmt_expr(e->args[0], 2) + " * " + fmt_expr(e->args[1], 2),
                  1, parent_prec);
    case AtomKind::InnerProduct:
      return wrap(fmt_expr(e->args[0], 3) + "' * " + fmt_expr(e->args[1], 2),
                  1, parent_prec);
    case AtomKind::Sum:
      return "sum(" + fmt_expr(e->args[0], 0) + ")";
    case AtomKind::SumSquares:
      return "sum_squares(" + fmt_expr(e->args[0], 0) + ")";
    case AtomKind::QuadOverIdentity:
      return "quad_over_identity(" + fmt_expr(e->args[0], 0) + ")";
    case AtomKind::Norm1:
      return "norm1(" + fmt_expr(e->args[0], 0) + ")";
    case AtomKind::MaxElementwise: {
      std::string s = "max(";
      for (size_t i = 0; i < e->args.size(); ++i)
        s += (i ? ", " : "") + fmt_expr(e->args[i], 0);
      return s + ")";
    }
    case AtomKind::AffineIndex:
      return fmt_expr(e->args[0], 3) + "[" + std::to_string(e->index) + "]";
  }
  return "?";
}

void collect_vars_ordered(const ExprPtr& e,
                          std::vector<std::pair<std::string, Shape>>& out) {
  if (e->kind == ExprKind::Variable) {
    for (const auto& [name, shape] : out)
      if (name == e->name) return;
    out.emplace_back(e->name, e->shape);
    return;
  }
  for (const auto& a : e->args) collect_vars_ordered(a, out);
}

}  // namespace

ParsedProblem parse_problem(const std::string& text) {
  Parser p;
  p.run(text);
  return std::move(p.result);
}

std::string format_problem(const DppProblem& p) {
  std::ostringstream os;
  std::vector<std::pair<std::string, Shape>> vars;
  collect_vars_ordered(p.objective, vars);
  for (const auto& [l, r] : p.eq_constraints) {
    collect_vars_ordered(l, vars);
    collect_vars_ordered(r, vars);
  }
  for (const auto& [l, r] : p.ineq_constraints) {
    collect_vars_ordered(l, vars);
    collect_vars_ordered(r, vars);
  }
  for (const auto& [name, shape] : vars)
    os << "var " << name << "[" << shape.rows << "]\n";
  for (const auto& [name, shape] : p.parameter_order) {
    os << "param " << name << "[" << shape.rows;
    if (shape.cols > 1) os << ", " << shape.cols;
    os << "]\n";
  }
  os << "minimize " << fmt_expr(p.objective, 0) << "\n";
  if (!p.eq_constraints.empty() || !p.ineq_constraints.empty()) {
    os << "subject to\n";
    for (const auto& [l, r] : p.eq_constraints)
      os << "  " << fmt_expr(l, 0) << " == " << fmt_expr(r, 0) << "\n";
    for (const auto& [l, r] : p.ineq_constraints)
      os << "  " << fmt_expr(l, 0) << " <= " << fmt_expr(r, 0) << "\n";
  }
  return os.str();
}

bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
  if (a->kind != b->kind || !(a->shape == b->shape)) return false;
  switch (a->kind) {
    case ExprKind::Variable:
    case ExprKind::Parameter:
      return a->name == b->name;
    case ExprKind::Constant:
      return a->value == b->value;
    case ExprKind::Atom:
      break;
  }
  if (a->atom != b->atom || a->index != b->index ||
      a->args.size() != b->args.size())
    return false;
  for (size_t i = 0; i < a->args.size(); ++i)
    if (!expr_equal(a->args[i], b->args[i])) return false;
  return true;
}

bool problem_equal(const DppProblem& a, const DppProblem& b) {
  if (!expr_equal(a.objective, b.objective)) return false;
  if (a.eq_constraints.size() != b.eq_constraints.size() ||
      a.ineq_constraints.size() != b.ineq_constraints.size() ||
      a.parameter_order != b.parameter_order)
    return false;
  for (size_t i = 0; i < a.eq_constraints.size(); ++i)
    if (!expr_equal(a.eq_constraints[i].first, b.eq_constraints[i].first) ||
        !expr_equal(a.eq_constraints[i].second, b.eq_constraints[i].second))
      return false;
  for (size_t i = 0; i < a.ineq_constraints.size(); ++i)
    if (!expr_equal(a.ineq_constraints[i].first,
                    b.ineq_constraints[i].first) ||
        !expr_equal(a.ineq_constraints[i].second,
                    b.ineq_constraints[i].second))
      return false;
  return true;
}

}  // namespace optlayer
