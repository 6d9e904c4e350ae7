#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "tdopt/errors.hpp"
#include "tdopt/expr.hpp"
#include "tdopt/model.hpp"

using tdopt::expr::ModelExpr;
using tdopt::expr::parse_error;

namespace {

// Central finite difference in one parameter; the independent check for
// every symbolic derivative below.
double fd_partial(const ModelExpr& e, double x, std::vector<double> theta,
                  std::size_t k) {
  double h = 1e-6 * (1.0 + std::abs(theta[k]));
  double save = theta[k];
  theta[k] = save + h;
  double up = e.eval(x, theta);
  theta[k] = save - h;
  double down = e.eval(x, theta);
  return (up - down) / (2.0 * h);
}

bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("parse collects parameters in first-appearance order") {
  ModelExpr e = ModelExpr::parse("t1 - t2*exp(-t3*x^t4)");
  REQUIRE(e.param_count() == 4);
  CHECK(e.params() == std::vector<std::string>{"t1", "t2", "t3", "t4"});
  CHECK(e.depends_on_x());
  CHECK(e.depends_on_params());
  double th[] = {2.0, 1.0, 0.8, 1.5};
  CHECK(e.eval(4.0, th) ==
        doctest::Approx(2.0 - std::exp(-0.8 * std::pow(4.0, 1.5)))
            .epsilon(1e-14));

  ModelExpr m = ModelExpr::parse("t1 + t2*x/(t3+x)");
  REQUIRE(m.param_count() == 3);
  double tm[] = {60.0, 294.0, 25.0};
  CHECK(m.eval(25.0, tm) == doctest::Approx(60.0 + 294.0 * 0.5).epsilon(1e-14));
}

TEST_CASE("syntax errors carry the offending position") {
  CHECK_THROWS_AS(ModelExpr::parse("t1 + *x"), parse_error);
  try {
    ModelExpr::parse("t1 + *x");
  } catch (const parse_error& err) {
    CHECK(err.offset() == 5);
  }
  CHECK_THROWS_AS(ModelExpr::parse(""), parse_error);
  CHECK_THROWS_AS(ModelExpr::parse("t1 + (t2*x"), parse_error);
  // unknown identifiers are rejected at parse time
  CHECK_THROWS_AS(ModelExpr::parse("t1 + y"), parse_error);
  CHECK_THROWS_AS(ModelExpr::parse("t1 + sin(x)"), parse_error);
}

TEST_CASE("differentiate folds a linear parameter to the constant 1") {
  ModelExpr d = ModelExpr::parse("t1 + t2*x").differentiate("t1");
  CHECK_FALSE(d.depends_on_x());
  CHECK_FALSE(d.depends_on_params());
  double th[] = {3.0, -7.0};
  CHECK(d.eval(0.25, th) == 1.0);
  CHECK(d.eval(-5.0, th) == 1.0);
}

TEST_CASE("differentiate applies the chain rule through exp") {
  ModelExpr e = ModelExpr::parse("t1 - t2*exp(-t3*x)");
  ModelExpr d = e.differentiate("t3");
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ux(0.0, 10.0), ut(0.1, 3.0);
  for (int i = 0; i < 50; ++i) {
    double x = ux(rng);
    std::vector<double> th = {ut(rng), ut(rng), ut(rng)};
    double expected = th[1] * x * std::exp(-th[2] * x);
    CHECK(rel_close(d.eval(x, th), expected, 1e-13));
  }
}

TEST_CASE("differentiate matches finite differences for the saturating ratio") {
  // d/dt3 of t1 + t2*x/(t3+x) is -t2*x/(t3+x)^2
  ModelExpr e = ModelExpr::parse("t1 + t2*x/(t3+x)");
  ModelExpr d = e.differentiate("t3");
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ux(0.0, 10.0), ut(0.5, 5.0);
  for (int i = 0; i < 50; ++i) {
    double x = ux(rng);
    std::vector<double> th = {ut(rng), ut(rng), ut(rng)};
    double sym = d.eval(x, th);
    double closed = -th[1] * x / ((th[2] + x) * (th[2] + x));
    CHECK(rel_close(sym, closed, 1e-13));
    CHECK(rel_close(sym, fd_partial(e, x, th, 2), 1e-5));
  }
  CHECK_THROWS_AS(e.differentiate("t9"), std::invalid_argument);
}

TEST_CASE("every partial of a parsed model matches finite differences") {
  const char* sources[] = {"t1 - t2*exp(-t3*x^t4)", "t1 + t2*x/(t3+x)",
                           "t1 + t2/(1+exp((t3-x)/t4))",
                           "t1 + t2*x*(t3-x)/(t4+x^2)"};
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> ux(0.2, 9.5), ut(0.4, 2.5);
  for (const char* src : sources) {
    ModelExpr e = ModelExpr::parse(src);
    std::vector<ModelExpr> grads;
    for (std::size_t k = 0; k < e.param_count(); ++k)
      grads.push_back(e.differentiate(k));
    for (int i = 0; i < 25; ++i) {
      double x = ux(rng);
      std::vector<double> th(e.param_count());
      for (double& t : th) t = ut(rng);
      for (std::size_t k = 0; k < e.param_count(); ++k)
        CHECK(rel_close(grads[k].eval(x, th), fd_partial(e, x, th, k), 1e-5));
    }
  }
}

TEST_CASE("pretty print round-trips to a structurally identical tree") {
  const char* sources[] = {
      "t1 - t2*exp(-t3*x^t4)", "t1 + t2*x/(t3+x)", "t1",
      "t1 + t2/(1+exp((t3-x)/t4))", "-t1*x + 2.5",
      "t1^t2^t3",  // right-associative power
      "(t1+t2)*(x-t1)/(t2+1)", "log(t1 + exp(x))"};
  for (const char* src : sources) {
    ModelExpr e = ModelExpr::parse(src);
    ModelExpr back = ModelExpr::parse(e.pretty());
    CHECK(back.same_structure(e));
    CHECK(back.params() == e.params());
  }
}

TEST_CASE("power handles the zero-base conventions and rejects the rest") {
  ModelExpr e = ModelExpr::parse("x^t1");
  double pos[] = {1.5};
  double zero[] = {0.0};
  CHECK(e.eval(0.0, pos) == 0.0);
  CHECK(e.eval(0.0, zero) == 1.0);
  // negative base with integer exponent is exact
  double two[] = {2.0};
  CHECK(e.eval(-3.0, two) == 9.0);
  CHECK_THROWS_AS(e.eval(-0.5, pos), tdopt::numeric_domain_error);
  double neg[] = {-1.0};
  CHECK_THROWS_AS(e.eval(0.0, neg), tdopt::numeric_domain_error);
}

TEST_CASE("division and log are guarded at evaluation time") {
  ModelExpr div = ModelExpr::parse("t1/x");
  double th[] = {1.0};
  CHECK_THROWS_AS(div.eval(0.0, th), tdopt::numeric_domain_error);
  ModelExpr lg = ModelExpr::parse("log(x - t1)");
  double t2[] = {2.0};
  CHECK_THROWS_AS(lg.eval(1.0, t2), tdopt::numeric_domain_error);
  CHECK(lg.eval(3.0, t2) == 0.0);
}

TEST_CASE("eval rejects a wrong-length parameter vector") {
  ModelExpr e = ModelExpr::parse("t1 + t2*x");
  double one[] = {1.0};
  CHECK_THROWS_AS(e.eval(0.0, std::span<const double>(one, 1)),
                  std::invalid_argument);
}

TEST_CASE("a wrapped expression behaves like the built-in family") {
  using namespace tdopt;
  ParamSpace box({-3, -3, 0.05, 0.4}, {3, 3, 3, 2.6});
  Model parsed = to_model(expr::ModelExpr::parse("t1 - t2*exp(-t3*x^t4)"), box,
                          "exp4_expr");
  Model builtin = make_builtin(Builtin::Exp4, box);
  CHECK(parsed.dim() == 4);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ux(0.05, 10.0), ut(0.45, 2.5);
  for (int i = 0; i < 1000; ++i) {
    double x = ux(rng);
    std::vector<double> th = {ut(rng), ut(rng), ut(rng), ut(rng)};
    double a = parsed.eval(x, th);
    double b = builtin.eval(x, th);
    CHECK(rel_close(a, b, 1e-12));
    auto ga = parsed.grad_theta(x, th);
    auto gb = builtin.grad_theta(x, th);
    for (std::size_t k = 0; k < 4; ++k) CHECK(rel_close(ga[k], gb[k], 1e-9));
  }
}

TEST_CASE("to_model checks the parameter-space dimension") {
  using namespace tdopt;
  auto e = expr::ModelExpr::parse("t1 + t2*x");
  CHECK_THROWS_AS(to_model(e, ParamSpace({0.0}, {1.0})),
                  std::invalid_argument);
  Model constant = to_model(expr::ModelExpr::parse("t1"),
                            ParamSpace({-10.0}, {10.0}), "c");
  CHECK(constant.dim() == 1);
  double th[] = {4.5};
  CHECK(constant.eval(-1.0, th) == 4.5);
  CHECK(constant.eval(0.33, th) == 4.5);
  // x^2 with no free parameter is rejected: every parameter must be used
  // and every declared parameter referenced, so a parameter-free source
  // cannot make a model with dim >= 1.
  CHECK_THROWS_AS(to_model(expr::ModelExpr::parse("x^2"),
                           ParamSpace({0.0}, {1.0})),
                  std::invalid_argument);
}
