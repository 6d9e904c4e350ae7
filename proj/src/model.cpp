#include "tdopt/model.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "tdopt/errors.hpp"

namespace tdopt {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

ParamSpace::ParamSpace(std::vector<double> lower, std::vector<double> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  require(!lower_.empty(), "parameter space must have dimension >= 1");
  require(lower_.size() == upper_.size(),
          "parameter bounds must have equal lengths");
  for (std::size_t k = 0; k < lower_.size(); ++k) {
    require(std::isfinite(lower_[k]) && std::isfinite(upper_[k]),
            "parameter bounds must be finite");
    require(lower_[k] < upper_[k],
            "lower bound must be below the upper bound at coordinate " +
                std::to_string(k + 1));
  }
}

ParamSpace ParamSpace::centered(const std::vector<double>& center, double scale) {
  require(scale > 0, "centered() needs a positive scale");
  std::vector<double> lo(center.size()), hi(center.size());
  for (std::size_t k = 0; k < center.size(); ++k) {
    require(center[k] != 0.0,
            "centered() cannot widen a zero coordinate; give explicit bounds");
    double half = scale * std::abs(center[k]);
    lo[k] = center[k] - half;
    hi[k] = center[k] + half;
  }
  return ParamSpace(std::move(lo), std::move(hi));
}

std::vector<double> ParamSpace::center() const {
  std::vector<double> c(dim());
  for (std::size_t k = 0; k < dim(); ++k)
    c[k] = 0.5 * (lower_[k] + upper_[k]);
  return c;
}

bool ParamSpace::contains(std::span<const double> theta, double tol) const {
  if (theta.size() != dim()) return false;
  for (std::size_t k = 0; k < dim(); ++k)
    if (theta[k] < lower_[k] - tol || theta[k] > upper_[k] + tol) return false;
  return true;
}

void ParamSpace::project(std::span<double> theta) const {
  require(theta.size() == dim(), "project(): wrong parameter dimension");
  for (std::size_t k = 0; k < dim(); ++k) {
    if (theta[k] < lower_[k]) theta[k] = lower_[k];
    if (theta[k] > upper_[k]) theta[k] = upper_[k];
  }
}

bool ParamSpace::on_boundary(std::span<const double> theta, double frac) const {
  require(theta.size() == dim(), "on_boundary(): wrong parameter dimension");
  for (std::size_t k = 0; k < dim(); ++k) {
    double margin = frac * width(k);
    if (theta[k] - lower_[k] <= margin || upper_[k] - theta[k] <= margin)
      return true;
  }
  return false;
}

Model::Model(std::string name, ParamSpace space, Eval eval, Grad grad,
             bool linear_in_params, std::optional<Separable> separable)
    : name_(std::move(name)),
      space_(std::move(space)),
      eval_(std::move(eval)),
      grad_(std::move(grad)),
      linear_(linear_in_params),
      separable_(std::move(separable)) {
  require(static_cast<bool>(eval_), "model needs an evaluator");
  require(static_cast<bool>(grad_), "model needs a gradient");
  if (separable_) {
    require(static_cast<bool>(separable_->basis) &&
                static_cast<bool>(separable_->recover) &&
                separable_->basis_dim >= 1,
            "separable structure needs a basis and a recover map");
    for (std::size_t k : separable_->nonlinear)
      require(k < dim(), "separable nonlinear index out of range");
  }
}

double Model::eval(double x, std::span<const double> theta) const {
  require(theta.size() == dim(), "model '" + name_ + "' expects " +
                                     std::to_string(dim()) + " parameters");
  double v = eval_(x, theta);
  if (!std::isfinite(v))
    throw numeric_domain_error("model '" + name_ + "' is non-finite at x = " +
                               std::to_string(x));
  return v;
}

void Model::grad_theta(double x, std::span<const double> theta,
                       std::span<double> out) const {
  require(theta.size() == dim() && out.size() == dim(),
          "model '" + name_ + "' gradient needs dimension " +
              std::to_string(dim()));
  grad_(x, theta, out);
  for (double g : out)
    if (!std::isfinite(g))
      throw numeric_domain_error("model '" + name_ +
                                 "' has a non-finite gradient at x = " +
                                 std::to_string(x));
}

std::vector<double> Model::grad_theta(double x,
                                      std::span<const double> theta) const {
  std::vector<double> g(dim());
  grad_theta(x, theta, std::span<double>(g));
  return g;
}

namespace {

// logistic pieces evaluated through t = exp(-|z|) so neither branch overflows:
// s = 1/(1+e^z), w = e^z/(1+e^z)^2 = s*(1-s)
void logistic_parts(double z, double& s, double& w) {
  double t = std::exp(-std::abs(z));
  double d = 1.0 + t;
  s = (z >= 0) ? t / d : 1.0 / d;
  w = t / (d * d);
}

}  // namespace

std::size_t builtin_dim(Builtin which) {
  switch (which) {
    case Builtin::Linear:
      return 2;
    case Builtin::Quadratic:
    case Builtin::Emax:
    case Builtin::Exp3:
      return 3;
    case Builtin::SigmoidEmax:
    case Builtin::Exp4:
      return 4;
  }
  throw std::logic_error("unreachable builtin");
}

std::string_view builtin_name(Builtin which) {
  switch (which) {
    case Builtin::Linear:
      return "linear";
    case Builtin::Quadratic:
      return "quadratic";
    case Builtin::Emax:
      return "emax";
    case Builtin::SigmoidEmax:
      return "sigmoid_emax";
    case Builtin::Exp3:
      return "exp3";
    case Builtin::Exp4:
      return "exp4";
  }
  throw std::logic_error("unreachable builtin");
}

std::optional<Builtin> builtin_from_name(std::string_view name) {
  if (name == "linear") return Builtin::Linear;
  if (name == "quadratic") return Builtin::Quadratic;
  if (name == "emax") return Builtin::Emax;
  if (name == "sigmoid_emax") return Builtin::SigmoidEmax;
  if (name == "exp3") return Builtin::Exp3;
  if (name == "exp4") return Builtin::Exp4;
  return std::nullopt;
}

Model make_builtin(Builtin which, ParamSpace space) {
  require(space.dim() == builtin_dim(which),
          std::string(builtin_name(which)) + " needs " +
              std::to_string(builtin_dim(which)) + " parameters");
  switch (which) {
    case Builtin::Linear:
      return Model(
          "linear", std::move(space),
          [](double x, std::span<const double> t) { return t[0] + t[1] * x; },
          [](double x, std::span<const double>, std::span<double> g) {
            g[0] = 1.0;
            g[1] = x;
          },
          /*linear_in_params=*/true);
    case Builtin::Quadratic: {
      // theta1 + theta2*x*(theta3 - x) = c0 + c1*x + c2*(-x^2) with
      // c = (theta1, theta2*theta3, theta2): linear in the derived basis
      Separable sep;
      sep.basis_dim = 3;
      sep.basis = [](double x, std::span<const double>, std::span<double> f) {
        f[0] = 1.0;
        f[1] = x;
        f[2] = -x * x;
      };
      sep.recover = [](std::span<const double> c, std::span<const double>,
                       std::span<double> t) {
        if (c[2] == 0.0) return false;  // theta3 unidentified at theta2 = 0
        t[0] = c[0];
        t[1] = c[2];
        t[2] = c[1] / c[2];
        return true;
      };
      return Model(
          "quadratic", std::move(space),
          [](double x, std::span<const double> t) {
            return t[0] + t[1] * x * (t[2] - x);
          },
          [](double x, std::span<const double> t, std::span<double> g) {
            g[0] = 1.0;
            g[1] = x * (t[2] - x);
            g[2] = t[1] * x;
          },
          /*linear_in_params=*/false, std::move(sep));
    }
    case Builtin::Emax: {
      Separable sep;
      sep.nonlinear = {2};
      sep.basis_dim = 2;
      sep.basis = [](double x, std::span<const double> nu, std::span<double> f) {
        f[0] = 1.0;
        f[1] = x / (nu[0] + x);
      };
      sep.recover = [](std::span<const double> c, std::span<const double> nu,
                       std::span<double> t) {
        t[0] = c[0];
        t[1] = c[1];
        t[2] = nu[0];
        return true;
      };
      return Model(
          "emax", std::move(space),
          [](double x, std::span<const double> t) {
            return t[0] + t[1] * x / (t[2] + x);
          },
          [](double x, std::span<const double> t, std::span<double> g) {
            double d = t[2] + x;
            g[0] = 1.0;
            g[1] = x / d;
            g[2] = -t[1] * x / (d * d);
          },
          /*linear_in_params=*/false, std::move(sep));
    }
    case Builtin::SigmoidEmax:
      return Model(
          "sigmoid_emax", std::move(space),
          [](double x, std::span<const double> t) {
            double s, w;
            logistic_parts((t[2] - x) / t[3], s, w);
            return t[0] + t[1] * s;
          },
          [](double x, std::span<const double> t, std::span<double> g) {
            double z = (t[2] - x) / t[3];
            double s, w;
            logistic_parts(z, s, w);
            g[0] = 1.0;
            g[1] = s;
            g[2] = -t[1] * w / t[3];
            g[3] = t[1] * w * z / t[3];
          });
    case Builtin::Exp3: {
      Separable sep;
      sep.nonlinear = {2};
      sep.basis_dim = 2;
      sep.basis = [](double x, std::span<const double> nu, std::span<double> f) {
        f[0] = 1.0;
        f[1] = -std::exp(-nu[0] * x);
      };
      sep.recover = [](std::span<const double> c, std::span<const double> nu,
                       std::span<double> t) {
        t[0] = c[0];
        t[1] = c[1];
        t[2] = nu[0];
        return true;
      };
      return Model(
          "exp3", std::move(space),
          [](double x, std::span<const double> t) {
            return t[0] - t[1] * std::exp(-t[2] * x);
          },
          [](double x, std::span<const double> t, std::span<double> g) {
            double e = std::exp(-t[2] * x);
            g[0] = 1.0;
            g[1] = -e;
            g[2] = t[1] * x * e;
          },
          /*linear_in_params=*/false, std::move(sep));
    }
    case Builtin::Exp4:
      return Model(
          "exp4", std::move(space),
          [](double x, std::span<const double> t) {
            return t[0] - t[1] * std::exp(-t[2] * std::pow(x, t[3]));
          },
          [](double x, std::span<const double> t, std::span<double> g) {
            double u = std::pow(x, t[3]);
            double e = std::exp(-t[2] * u);
            g[0] = 1.0;
            g[1] = -e;
            g[2] = t[1] * u * e;
            // x^t4 * log(x) -> 0 as x -> 0+ for t4 > 0
            g[3] = (x > 0) ? t[1] * t[2] * e * u * std::log(x) : 0.0;
          });
  }
  throw std::logic_error("unreachable builtin");
}

Model to_model(const expr::ModelExpr& e, ParamSpace space, std::string name) {
  require(e.param_count() == space.dim(),
          "expression has " + std::to_string(e.param_count()) +
              " parameters but the space has dimension " +
              std::to_string(space.dim()));
  auto partials = std::make_shared<std::vector<expr::ModelExpr>>();
  bool linear = true;
  for (std::size_t k = 0; k < e.param_count(); ++k) {
    partials->push_back(e.differentiate(k));
    if (partials->back().depends_on_params()) linear = false;
  }
  auto body = std::make_shared<expr::ModelExpr>(e);
  return Model(
      std::move(name), std::move(space),
      [body](double x, std::span<const double> t) { return body->eval(x, t); },
      [partials](double x, std::span<const double> t, std::span<double> g) {
        for (std::size_t k = 0; k < partials->size(); ++k)
          g[k] = (*partials)[k].eval(x, t);
      },
      linear);
}

}  // namespace tdopt
