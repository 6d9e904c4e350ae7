#pragma once

// Problem builders shared by the unit and acceptance tests. Both problems
// have closed-form inner fits, so every criterion quantity can be checked
// against hand-computed values.

#include <memory>
#include <vector>

#include "tdopt/criterion.hpp"
#include "tdopt/expr.hpp"
#include "tdopt/model.hpp"

namespace test_support {

inline std::shared_ptr<const tdopt::Model> parabola_model() {
  return std::make_shared<const tdopt::Model>(tdopt::to_model(
      tdopt::expr::ModelExpr::parse("t1*x^2"),
      tdopt::ParamSpace({0.5}, {2.0}), "parabola"));
}

// Fixed parabola x^2 against the straight-line class on [-1, 1]. The
// optimal design is {-1, 0, 1} with weights (1/4, 1/2, 1/4) and T = 1/4;
// at the uniform design on {-1, 0, 1} the best line is the constant 2/3,
// giving T = 2/9 and max Psi = 4/9.
inline tdopt::ComparisonProblem parabola_vs_line() {
  using namespace tdopt;
  auto line = std::make_shared<const Model>(
      make_builtin(Builtin::Linear, ParamSpace({-100, -100}, {100, 100})));
  return ComparisonProblem({parabola_model(), line}, {{1.0}, {}},
                           {{0.0, 1.0}, {0.0, 0.0}}, Interval{-1.0, 1.0});
}

// Same fixed parabola against the constant class; the inner fit is the
// weighted mean of x^2 over the design.
inline tdopt::ComparisonProblem parabola_vs_constant(double box = 100.0) {
  using namespace tdopt;
  auto constant = std::make_shared<const Model>(tdopt::to_model(
      expr::ModelExpr::parse("t1"), ParamSpace({-box}, {box}), "constant"));
  return ComparisonProblem({parabola_model(), constant}, {{1.0}, {}},
                           {{0.0, 1.0}, {0.0, 0.0}}, Interval{-1.0, 1.0});
}

// The two exponential growth curves on [0, 10]: fixed
// t1 - t2*exp(-t3*x^t4) at (2, 1, 0.8, 1.5) against the class
// t1 - t2*exp(-t3*x).
inline tdopt::ComparisonProblem exp4_vs_exp3() {
  using namespace tdopt;
  auto fixed = std::make_shared<const Model>(make_builtin(
      Builtin::Exp4,
      ParamSpace({-100, -100, 1e-4, 1e-4}, {100, 100, 100, 100})));
  auto rival = std::make_shared<const Model>(make_builtin(
      Builtin::Exp3, ParamSpace({-100, -100, 1e-4}, {100, 100, 100})));
  return ComparisonProblem({fixed, rival}, {{2.0, 1.0, 0.8, 1.5}, {}},
                           {{0.0, 1.0}, {0.0, 0.0}}, Interval{0.0, 10.0});
}

}  // namespace test_support
