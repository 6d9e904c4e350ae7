#include "tdopt/expr.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <sstream>

#include "tdopt/errors.hpp"

namespace tdopt::expr {

namespace detail {

// PowLn(u, v) stands for u^v * log(u); it only appears in derivatives of
// u^v with respect to an exponent parameter and evaluates to the limit 0
// when u = 0 and v > 0, which keeps gradients of x^t finite at x = 0.
enum class Op { Const, X, Param, Add, Sub, Mul, Div, Pow, Neg, Exp, Log, PowLn };

struct Node {
  Op op;
  double value = 0.0;
  int param = -1;
  NodePtr a, b;
};

}  // namespace detail

namespace {

using detail::Node;
using detail::NodePtr;
using detail::Op;

NodePtr raw(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr n_const(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

NodePtr n_param(int index) {
  auto n = std::make_shared<Node>();
  n->op = Op::Param;
  n->param = index;
  return n;
}

bool is_const(const NodePtr& n) { return n->op == Op::Const; }
bool is_const(const NodePtr& n, double v) {
  return n->op == Op::Const && n->value == v;
}

double eval_pow(double base, double ex) {
  if (base > 0) return std::pow(base, ex);
  if (base == 0) {
    if (ex > 0) return 0.0;
    if (ex == 0) return 1.0;
    throw numeric_domain_error("0 raised to a negative power");
  }
  if (std::nearbyint(ex) == ex && std::abs(ex) < 9.007199254740992e15)
    return std::pow(base, ex);
  throw numeric_domain_error("negative base " + std::to_string(base) +
                             " with non-integer exponent");
}

// Simplifying constructors. Only local folds that are exact in IEEE
// arithmetic are applied (identity elements, constant folding, sign
// lifting); terms are never reordered, so evaluation stays bit-stable.

NodePtr n_neg(NodePtr a);
NodePtr n_sub(NodePtr a, NodePtr b);

NodePtr n_add(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  if (is_const(a) && is_const(b)) {
    double v = a->value + b->value;
    if (std::isfinite(v)) return n_const(v);
  }
  if (b->op == Op::Neg) return n_sub(std::move(a), b->a);
  return raw(Op::Add, std::move(a), std::move(b));
}

NodePtr n_sub(NodePtr a, NodePtr b) {
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return n_neg(std::move(b));
  if (is_const(a) && is_const(b)) {
    double v = a->value - b->value;
    if (std::isfinite(v)) return n_const(v);
  }
  if (b->op == Op::Neg) return n_add(std::move(a), b->a);
  return raw(Op::Sub, std::move(a), std::move(b));
}

NodePtr n_neg(NodePtr a) {
  if (a->op == Op::Neg) return a->a;
  if (is_const(a)) return n_const(-a->value);
  return raw(Op::Neg, std::move(a));
}

NodePtr n_mul(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0) || is_const(b, 0.0)) return n_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, -1.0)) return n_neg(std::move(b));
  if (is_const(b, -1.0)) return n_neg(std::move(a));
  if (is_const(a) && is_const(b)) {
    double v = a->value * b->value;
    if (std::isfinite(v)) return n_const(v);
  }
  if (a->op == Op::Neg) return n_neg(n_mul(a->a, std::move(b)));
  if (b->op == Op::Neg) return n_neg(n_mul(std::move(a), b->a));
  return raw(Op::Mul, std::move(a), std::move(b));
}

NodePtr n_div(NodePtr a, NodePtr b) {
  if (is_const(a, 0.0)) return n_const(0.0);
  if (is_const(b, 1.0)) return a;
  if (is_const(a) && is_const(b) && b->value != 0.0) {
    double v = a->value / b->value;
    if (std::isfinite(v)) return n_const(v);
  }
  if (a->op == Op::Neg) return n_neg(n_div(a->a, std::move(b)));
  if (b->op == Op::Neg) return n_neg(n_div(std::move(a), b->a));
  return raw(Op::Div, std::move(a), std::move(b));
}

NodePtr n_pow(NodePtr a, NodePtr b) {
  if (is_const(b, 1.0)) return a;
  if (is_const(b, 0.0)) return n_const(1.0);
  if (is_const(a, 1.0)) return n_const(1.0);
  if (is_const(a) && is_const(b)) {
    try {
      double v = eval_pow(a->value, b->value);
      if (std::isfinite(v)) return n_const(v);
    } catch (const numeric_domain_error&) {
      // leave unfolded; the error surfaces at evaluation time
    }
  }
  return raw(Op::Pow, std::move(a), std::move(b));
}

NodePtr n_exp(NodePtr a) {
  if (is_const(a)) {
    double v = std::exp(a->value);
    if (std::isfinite(v)) return n_const(v);
  }
  return raw(Op::Exp, std::move(a));
}

NodePtr n_log(NodePtr a) {
  if (is_const(a) && a->value > 0) {
    double v = std::log(a->value);
    if (std::isfinite(v)) return n_const(v);
  }
  return raw(Op::Log, std::move(a));
}

NodePtr n_powln(NodePtr a, NodePtr b) {
  if (is_const(a) && is_const(b)) {
    try {
      if (a->value > 0) {
        double v = eval_pow(a->value, b->value) * std::log(a->value);
        if (std::isfinite(v)) return n_const(v);
      } else if (a->value == 0 && b->value > 0) {
        return n_const(0.0);
      }
    } catch (const numeric_domain_error&) {
    }
  }
  return raw(Op::PowLn, std::move(a), std::move(b));
}

double eval_node(const Node& n, double x, std::span<const double> th) {
  switch (n.op) {
    case Op::Const:
      return n.value;
    case Op::X:
      return x;
    case Op::Param:
      return th[static_cast<std::size_t>(n.param)];
    case Op::Add:
      return eval_node(*n.a, x, th) + eval_node(*n.b, x, th);
    case Op::Sub:
      return eval_node(*n.a, x, th) - eval_node(*n.b, x, th);
    case Op::Mul:
      return eval_node(*n.a, x, th) * eval_node(*n.b, x, th);
    case Op::Div: {
      double d = eval_node(*n.b, x, th);
      if (d == 0.0) throw numeric_domain_error("division by zero in expression");
      return eval_node(*n.a, x, th) / d;
    }
    case Op::Pow:
      return eval_pow(eval_node(*n.a, x, th), eval_node(*n.b, x, th));
    case Op::Neg:
      return -eval_node(*n.a, x, th);
    case Op::Exp:
      return std::exp(eval_node(*n.a, x, th));
    case Op::Log: {
      double v = eval_node(*n.a, x, th);
      if (v <= 0.0)
        throw numeric_domain_error("log of nonpositive value " + std::to_string(v));
      return std::log(v);
    }
    case Op::PowLn: {
      double u = eval_node(*n.a, x, th);
      double v = eval_node(*n.b, x, th);
      if (u < 0.0)
        throw numeric_domain_error("negative base in power derivative");
      if (u == 0.0) {
        if (v > 0.0) return 0.0;
        throw numeric_domain_error("0^v*log(0) with v <= 0");
      }
      return eval_pow(u, v) * std::log(u);
    }
  }
  throw std::logic_error("unreachable expression op");
}

bool references_param(const NodePtr& n, int target) {
  if (!n) return false;
  if (n->op == Op::Param) return n->param == target;
  return references_param(n->a, target) || references_param(n->b, target);
}

bool references_any_param(const NodePtr& n) {
  if (!n) return false;
  if (n->op == Op::Param) return true;
  return references_any_param(n->a) || references_any_param(n->b);
}

bool references_x(const NodePtr& n) {
  if (!n) return false;
  if (n->op == Op::X) return true;
  return references_x(n->a) || references_x(n->b);
}

NodePtr diff_node(const NodePtr& n, int target) {
  switch (n->op) {
    case Op::Const:
    case Op::X:
      return n_const(0.0);
    case Op::Param:
      return n_const(n->param == target ? 1.0 : 0.0);
    case Op::Add:
      return n_add(diff_node(n->a, target), diff_node(n->b, target));
    case Op::Sub:
      return n_sub(diff_node(n->a, target), diff_node(n->b, target));
    case Op::Neg:
      return n_neg(diff_node(n->a, target));
    case Op::Mul:
      return n_add(n_mul(diff_node(n->a, target), n->b),
                   n_mul(n->a, diff_node(n->b, target)));
    case Op::Div:
      return n_div(n_sub(n_mul(diff_node(n->a, target), n->b),
                         n_mul(n->a, diff_node(n->b, target))),
                   n_pow(n->b, n_const(2.0)));
    case Op::Exp:
      return n_mul(diff_node(n->a, target), NodePtr(n));
    case Op::Log:
      return n_div(diff_node(n->a, target), n->a);
    case Op::Pow: {
      bool u_dep = references_param(n->a, target);
      bool v_dep = references_param(n->b, target);
      if (!u_dep && !v_dep) return n_const(0.0);
      if (!v_dep) {
        // power rule; avoids log(u) so negative bases stay differentiable
        return n_mul(n_mul(n->b, n_pow(n->a, n_sub(n->b, n_const(1.0)))),
                     diff_node(n->a, target));
      }
      if (!u_dep) return n_mul(n_powln(n->a, n->b), diff_node(n->b, target));
      return n_mul(NodePtr(n),
                   n_add(n_mul(diff_node(n->b, target), n_log(n->a)),
                         n_mul(n->b, n_div(diff_node(n->a, target), n->a))));
    }
    case Op::PowLn: {
      // d(u^v log u) = d(u^v) log u + u^(v-1) du
      NodePtr dpow = diff_node(raw(Op::Pow, n->a, n->b), target);
      return n_add(n_mul(dpow, n_log(n->a)),
                   n_mul(n_pow(n->a, n_sub(n->b, n_const(1.0))),
                         diff_node(n->a, target)));
    }
  }
  throw std::logic_error("unreachable expression op");
}

// ---------------------------------------------------------------- parsing

struct Token {
  enum Kind { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };
  Kind kind;
  double num = 0.0;
  std::string text;
  std::size_t pos = 0;
};

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto push = [&](Token::Kind k, std::size_t pos) {
    out.push_back({k, 0.0, {}, pos});
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++i;
      continue;
    }
    if ((c >= '0' && c <= '9') || c == '.') {
      std::size_t start = i;
      while (i < src.size() && src[i] >= '0' && src[i] <= '9') ++i;
      if (i < src.size() && src[i] == '.') {
        ++i;
        while (i < src.size() && src[i] >= '0' && src[i] <= '9') ++i;
      }
      if (i == start + 1 && src[start] == '.')
        throw parse_error("malformed number", start);
      if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
        std::size_t mark = i;
        ++i;
        if (i < src.size() && (src[i] == '+' || src[i] == '-')) ++i;
        if (i >= src.size() || src[i] < '0' || src[i] > '9')
          throw parse_error("malformed exponent in number", mark);
        while (i < src.size() && src[i] >= '0' && src[i] <= '9') ++i;
      }
      std::string text(src.substr(start, i - start));
      Token t{Token::Number, std::strtod(text.c_str(), nullptr), std::move(text),
              start};
      out.push_back(std::move(t));
      continue;
    }
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
      std::size_t start = i;
      while (i < src.size() &&
             ((src[i] >= 'a' && src[i] <= 'z') || (src[i] >= 'A' && src[i] <= 'Z') ||
              (src[i] >= '0' && src[i] <= '9') || src[i] == '_'))
        ++i;
      Token t{Token::Ident, 0.0, std::string(src.substr(start, i - start)), start};
      out.push_back(std::move(t));
      continue;
    }
    switch (c) {
      case '+': push(Token::Plus, i); break;
      case '-': push(Token::Minus, i); break;
      case '*': push(Token::Star, i); break;
      case '/': push(Token::Slash, i); break;
      case '^': push(Token::Caret, i); break;
      case '(': push(Token::LParen, i); break;
      case ')': push(Token::RParen, i); break;
      default:
        throw parse_error(std::string("unexpected character '") + c + "'", i);
    }
    ++i;
  }
  push(Token::End, src.size());
  return out;
}

bool is_param_name(const std::string& s) {
  if (s.size() < 2 || s[0] != 't') return false;
  if (s[1] < '1' || s[1] > '9') return false;
  for (std::size_t k = 2; k < s.size(); ++k)
    if (s[k] < '0' || s[k] > '9') return false;
  return true;
}

struct Parser {
  const std::vector<Token>& toks;
  std::size_t i = 0;
  std::vector<std::string> params;

  const Token& peek() const { return toks[i]; }
  const Token& advance() { return toks[i++]; }

  int param_index(const std::string& name) {
    for (std::size_t k = 0; k < params.size(); ++k)
      if (params[k] == name) return static_cast<int>(k);
    params.push_back(name);
    return static_cast<int>(params.size() - 1);
  }

  NodePtr expr() {
    NodePtr e = term();
    while (peek().kind == Token::Plus || peek().kind == Token::Minus) {
      bool add = advance().kind == Token::Plus;
      NodePtr r = term();
      e = add ? n_add(std::move(e), std::move(r))
              : n_sub(std::move(e), std::move(r));
    }
    return e;
  }

  NodePtr term() {
    NodePtr e = factor();
    while (peek().kind == Token::Star || peek().kind == Token::Slash) {
      bool mul = advance().kind == Token::Star;
      NodePtr r = factor();
      e = mul ? n_mul(std::move(e), std::move(r))
              : n_div(std::move(e), std::move(r));
    }
    return e;
  }

  // unary minus binds looser than '^': -x^2 is -(x^2), x^-2 is x^(-2)
  NodePtr factor() {
    if (peek().kind == Token::Minus) {
      advance();
      return n_neg(factor());
    }
    return base();
  }

  NodePtr base() {
    NodePtr p = primary();
    if (peek().kind == Token::Caret) {
      advance();
      NodePtr e = factor();
      return n_pow(std::move(p), std::move(e));
    }
    return p;
  }

  NodePtr primary() {
    const Token& t = peek();
    switch (t.kind) {
      case Token::Number:
        advance();
        return n_const(t.num);
      case Token::LParen: {
        advance();
        NodePtr e = expr();
        if (peek().kind != Token::RParen)
          throw parse_error("expected ')'", peek().pos);
        advance();
        return e;
      }
      case Token::Ident: {
        advance();
        if (t.text == "x") return raw(Op::X);
        if (t.text == "exp" || t.text == "log") {
          if (peek().kind != Token::LParen)
            throw parse_error("expected '(' after '" + t.text + "'", peek().pos);
          advance();
          NodePtr arg = expr();
          if (peek().kind != Token::RParen)
            throw parse_error("expected ')'", peek().pos);
          advance();
          return t.text == "exp" ? n_exp(std::move(arg)) : n_log(std::move(arg));
        }
        if (is_param_name(t.text)) return n_param(param_index(t.text));
        throw parse_error("unknown identifier '" + t.text + "'", t.pos);
      }
      default:
        throw parse_error(
            "expected a number, 'x', a parameter, 'exp', 'log', '(' or '-'",
            t.pos);
    }
  }
};

// ----------------------------------------------------------- pretty print

std::string const_text(double v) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

// precedence: + - (1), * / (2), unary - (3), ^ (4), atoms (5); a negative
// constant renders with a leading '-' and is treated like a unary minus
int print_prec(const Node& n) {
  switch (n.op) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
    case Op::PowLn:
      return 2;
    case Op::Neg:
      return 3;
    case Op::Pow:
      return 4;
    case Op::Const:
      return std::signbit(n.value) ? 3 : 5;
    default:
      return 5;
  }
}

void print_node(const Node& n, const std::vector<std::string>& params,
                std::string& out);

void print_child(const NodePtr& c, int min_prec,
                 const std::vector<std::string>& params, std::string& out) {
  if (print_prec(*c) < min_prec) {
    out += '(';
    print_node(*c, params, out);
    out += ')';
  } else {
    print_node(*c, params, out);
  }
}

void print_node(const Node& n, const std::vector<std::string>& params,
                std::string& out) {
  switch (n.op) {
    case Op::Const:
      out += const_text(n.value);
      return;
    case Op::X:
      out += 'x';
      return;
    case Op::Param:
      out += params[static_cast<std::size_t>(n.param)];
      return;
    case Op::Add:
      print_child(n.a, 1, params, out);
      out += " + ";
      print_child(n.b, 2, params, out);
      return;
    case Op::Sub:
      print_child(n.a, 1, params, out);
      out += " - ";
      print_child(n.b, 2, params, out);
      return;
    case Op::Mul:
      print_child(n.a, 2, params, out);
      out += '*';
      print_child(n.b, 3, params, out);
      return;
    case Op::Div:
      print_child(n.a, 2, params, out);
      out += '/';
      print_child(n.b, 3, params, out);
      return;
    case Op::Neg:
      out += '-';
      print_child(n.a, 4, params, out);
      return;
    case Op::Pow:
      print_child(n.a, 5, params, out);
      out += '^';
      print_child(n.b, 3, params, out);
      return;
    case Op::Exp:
      out += "exp(";
      print_node(*n.a, params, out);
      out += ')';
      return;
    case Op::Log:
      out += "log(";
      print_node(*n.a, params, out);
      out += ')';
      return;
    case Op::PowLn:
      // renders as its mathematical meaning u^v*log(u)
      print_child(n.a, 5, params, out);
      out += '^';
      print_child(n.b, 3, params, out);
      out += "*log(";
      print_node(*n.a, params, out);
      out += ')';
      return;
  }
}

bool same_node(const NodePtr& a, const NodePtr& b) {
  if (!a || !b) return a == b;
  if (a->op != b->op || a->param != b->param) return false;
  if (a->op == Op::Const &&
      std::bit_cast<std::uint64_t>(a->value) != std::bit_cast<std::uint64_t>(b->value))
    return false;
  return same_node(a->a, b->a) && same_node(a->b, b->b);
}

}  // namespace

ModelExpr::ModelExpr(detail::NodePtr root, std::vector<std::string> params)
    : root_(std::move(root)), params_(std::move(params)) {}

ModelExpr ModelExpr::parse(std::string_view source) {
  std::vector<Token> toks = tokenize(source);
  Parser p{toks, 0, {}};
  NodePtr root = p.expr();
  if (p.peek().kind != Token::End)
    throw parse_error("unexpected trailing input", p.peek().pos);
  return ModelExpr(std::move(root), std::move(p.params));
}

double ModelExpr::eval(double x, std::span<const double> theta) const {
  if (theta.size() != params_.size())
    throw std::invalid_argument("expression expects " +
                                std::to_string(params_.size()) +
                                " parameters, got " + std::to_string(theta.size()));
  return eval_node(*root_, x, theta);
}

ModelExpr ModelExpr::differentiate(std::string_view param_name) const {
  for (std::size_t k = 0; k < params_.size(); ++k)
    if (params_[k] == param_name) return differentiate(k);
  throw std::invalid_argument("unknown parameter '" + std::string(param_name) +
                              "'");
}

ModelExpr ModelExpr::differentiate(std::size_t param_index) const {
  if (param_index >= params_.size())
    throw std::invalid_argument("parameter index out of range");
  return ModelExpr(diff_node(root_, static_cast<int>(param_index)), params_);
}

std::string ModelExpr::pretty() const {
  std::string out;
  print_node(*root_, params_, out);
  return out;
}

bool ModelExpr::depends_on_params() const { return references_any_param(root_); }

bool ModelExpr::depends_on_x() const { return references_x(root_); }

bool ModelExpr::same_structure(const ModelExpr& other) const {
  return params_ == other.params_ && same_node(root_, other.root_);
}

}  // namespace tdopt::expr
