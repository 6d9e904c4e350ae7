#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tdopt::expr {

//! Syntax error in an expression source string. offset() is the 0-based
//! character position of the offending token.
class parse_error : public std::runtime_error {
public:
  parse_error(const std::string& what, std::size_t offset)
      : std::runtime_error("offset " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

namespace detail {
struct Node;
using NodePtr = std::shared_ptr<const Node>;
}  // namespace detail

//! Immutable arithmetic expression in the design variable `x` and parameters
//! `t1..td`. Supported: numeric literals, + - * / ^ (right-associative),
//! unary minus, exp(), log(). Parameters are collected in first-appearance
//! order; eval() takes the parameter vector in that order.
class ModelExpr {
public:
  //! Parses source; throws parse_error with position and expectation on
  //! malformed input, and on unknown identifiers.
  static ModelExpr parse(std::string_view source);

  double eval(double x, std::span<const double> theta) const;

  //! Symbolic partial derivative with respect to one parameter, given either
  //! by name ("t3") or by index into params(). The result keeps the parent's
  //! parameter list so it evaluates with the same theta vector.
  ModelExpr differentiate(std::string_view param_name) const;
  ModelExpr differentiate(std::size_t param_index) const;

  //! Minimal-parentheses rendering; parse(pretty()) of a parsed expression
  //! reproduces the AST structurally.
  std::string pretty() const;

  std::size_t param_count() const { return params_.size(); }
  const std::vector<std::string>& params() const { return params_; }

  //! True when any parameter occurs in the expression.
  bool depends_on_params() const;
  //! True when the design variable occurs.
  bool depends_on_x() const;

  //! Structural equality (same tree, bitwise-equal constants).
  bool same_structure(const ModelExpr& other) const;

private:
  ModelExpr(detail::NodePtr root, std::vector<std::string> params);

  detail::NodePtr root_;
  std::vector<std::string> params_;
};

}  // namespace tdopt::expr
