#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tdopt/expr.hpp"

namespace tdopt {

//! Axis-aligned parameter box. Invariant: lower(k) <= upper(k) for all k,
//! dim >= 1.
class ParamSpace {
public:
  ParamSpace(std::vector<double> lower, std::vector<double> upper);

  //! Box center +- scale*|center| per coordinate. A zero center coordinate
  //! gives an empty interval and is rejected; supply explicit bounds then.
  static ParamSpace centered(const std::vector<double>& center,
                             double scale = 10.0);

  std::size_t dim() const { return lower_.size(); }
  double lower(std::size_t k) const { return lower_[k]; }
  double upper(std::size_t k) const { return upper_[k]; }
  double width(std::size_t k) const { return upper_[k] - lower_[k]; }
  std::vector<double> center() const;

  bool contains(std::span<const double> theta, double tol = 0.0) const;
  //! Clamps theta into the box in place.
  void project(std::span<double> theta) const;
  //! True when any coordinate sits within frac*width of a bound.
  bool on_boundary(std::span<const double> theta, double frac = 1e-9) const;

private:
  std::vector<double> lower_, upper_;
};

//! Separable least-squares structure: eta(x, theta) = c(theta) . phi(x, nu)
//! with nu = theta[nonlinear]. Lets the fitter solve the coefficients c by
//! exact weighted least squares and search only over nu (variable
//! projection), which sidesteps the ill-conditioned joint problem.
struct Separable {
  //! Indices of the parameters the basis depends on; all others are linear.
  std::vector<std::size_t> nonlinear;
  std::size_t basis_dim = 0;
  //! Writes phi(x, nu); nu values follow the `nonlinear` order.
  std::function<void(double, std::span<const double>, std::span<double>)> basis;
  //! Rebuilds theta from (c, nu); false when the coefficients fall outside
  //! the range of the parametrization (gauge directions, sign constraints).
  std::function<bool(std::span<const double>, std::span<const double>,
                     std::span<double>)>
      recover;
};

//! A regression function eta(x, theta) on a scalar design variable with a
//! boxed parameter vector. eval/grad_theta validate dimensions and reject
//! non-finite results; the evaluator is expected to be defined on the whole
//! box for every x in the design space.
class Model {
public:
  using Eval = std::function<double(double, std::span<const double>)>;
  using Grad = std::function<void(double, std::span<const double>, std::span<double>)>;

  Model(std::string name, ParamSpace space, Eval eval, Grad grad,
        bool linear_in_params = false,
        std::optional<Separable> separable = std::nullopt);

  const std::string& name() const { return name_; }
  std::size_t dim() const { return space_.dim(); }
  const ParamSpace& space() const { return space_; }
  //! Affine in theta; enables the exact weighted least-squares fit path.
  bool linear_in_params() const { return linear_; }
  //! Variable-projection structure, when the family provides one.
  const std::optional<Separable>& separable() const { return separable_; }

  double eval(double x, std::span<const double> theta) const;
  void grad_theta(double x, std::span<const double> theta,
                  std::span<double> out) const;
  std::vector<double> grad_theta(double x, std::span<const double> theta) const;

private:
  std::string name_;
  ParamSpace space_;
  Eval eval_;
  Grad grad_;
  bool linear_;
  std::optional<Separable> separable_;
};

//! Built-in model families. "linear" is flagged linear-in-parameters.
//!   linear        theta1 + theta2*x
//!   quadratic     theta1 + theta2*x*(theta3 - x)
//!   emax          theta1 + theta2*x/(theta3 + x)
//!   sigmoid_emax  theta1 + theta2/(1 + exp((theta3 - x)/theta4))
//!   exp3          theta1 - theta2*exp(-theta3*x)
//!   exp4          theta1 - theta2*exp(-theta3*x^theta4)
enum class Builtin { Linear, Quadratic, Emax, SigmoidEmax, Exp3, Exp4 };

Model make_builtin(Builtin which, ParamSpace space);
std::size_t builtin_dim(Builtin which);
std::optional<Builtin> builtin_from_name(std::string_view name);
std::string_view builtin_name(Builtin which);

//! Wraps a parsed expression as a Model. The gradient is pre-differentiated
//! symbolically; linearity in the parameters is detected structurally (every
//! partial derivative free of parameter references).
Model to_model(const expr::ModelExpr& e, ParamSpace space,
               std::string name = "expr");

}  // namespace tdopt
