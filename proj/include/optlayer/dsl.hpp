#pragma once

#include <map>
#include <string>

#include "optlayer/expr.hpp"

namespace optlayer {

struct SourceLocation {
  int line = 1;
  int column = 1;
  std::string str() const {
    return std::to_string(line) + ":" + std::to_string(column);
  }
};

struct DslError : OptlayerError {
  DslError(const std::string& kind, const SourceLocation& loc,
           const std::string& msg)
      : OptlayerError(kind + " at " + loc.str() + ": " + msg), location(loc) {}
  SourceLocation location;
};

struct LexError : DslError {
  using DslError::DslError;
};
struct ParseError : DslError {
  using DslError::DslError;
};
struct UndeclaredIdentifier : DslError {
  using DslError::DslError;
};
struct ArityError : DslError {
  using DslError::DslError;
};

struct ParsedProblem {
  DppProblem problem;
  std::map<std::string, Mat> parameter_values;  // "= literal" bindings
};

// Parses the ".dpp" modeling language:
//   decl*  "minimize" expr  ("subject" "to" constraint+)?
// with decl := ("var"|"param") ident "[" int ("," int)? "]" ("=" literal)?
ParsedProblem parse_problem(const std::string& text);

// Deterministic canonical formatting; parse(format(p)) is structurally
// equal to p.
std::string format_problem(const DppProblem& p);

bool expr_equal(const ExprPtr& a, const ExprPtr& b);
bool problem_equal(const DppProblem& a, const DppProblem& b);

}  // namespace optlayer
